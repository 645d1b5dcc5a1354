//! Cached partial contractions of `<phi| O |psi>` pointing at a center node.
//!
//! Every link carries two possible environments: `up[n]` contracts the
//! subtree below `n`, `down[n]` contracts everything outside it. An
//! environment is a matrix `E[a_bra, a_ket]` living on the link above `n`.
//! Entries remember the tensor versions they were built from, so a cache can
//! be refreshed after local updates without recomputing clean entries.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::lattice::{NodeId, NodeKind, TreeTopology};
use crate::operators::LocalOperator;
use crate::tensor::{apply_leg, project_out, vdot, C64, ONE};
use crate::ttn::TtnState;

#[derive(Clone, Debug)]
struct Entry {
    stamp: u64,
    env: Array2<C64>,
}

#[derive(Clone, Debug)]
pub struct EnvironmentCache {
    topo: Arc<TreeTopology>,
    op: Option<LocalOperator>,
    center: NodeId,
    ids: (u64, u64),
    up: Vec<Option<Entry>>,
    down: Vec<Option<Entry>>,
    recomputed: usize,
}

/// Partial contraction `<phi| O |psi>` towards `center`.
pub fn build_environments(
    psi: &TtnState,
    phi: &TtnState,
    op: Option<LocalOperator>,
    center: NodeId,
) -> Result<EnvironmentCache> {
    EnvironmentCache::new(psi, phi, op, center)
}

impl EnvironmentCache {
    pub fn new(
        psi: &TtnState,
        phi: &TtnState,
        op: Option<LocalOperator>,
        center: NodeId,
    ) -> Result<Self> {
        if !psi.same_topology(phi) {
            return Err(Error::TopologyMismatch);
        }
        let topo = psi.topology().clone();
        if let Some(op) = &op {
            let n = topo.geometry().n_sites();
            if let Some(&s) = op.support().iter().find(|&&s| s >= n) {
                return Err(Error::InvalidOperator(format!("site {s} outside {n}-site lattice")));
            }
        }
        let n = topo.n_nodes();
        let mut cache = Self {
            topo,
            op,
            center,
            ids: (psi.id(), phi.id()),
            up: vec![None; n],
            down: vec![None; n],
            recomputed: 0,
        };
        cache.refresh(psi, phi)?;
        Ok(cache)
    }

    pub fn center(&self) -> NodeId {
        self.center
    }

    /// Point the cache at a new center; call [`refresh`](Self::refresh)
    /// before reading.
    pub fn set_center(&mut self, center: NodeId) {
        self.center = center;
    }

    /// Total number of environment contractions performed so far.
    pub fn recomputed(&self) -> usize {
        self.recomputed
    }

    fn stamps(&self, psi: &TtnState, phi: &TtnState) -> (Vec<u64>, u64) {
        let mut sub = vec![0u64; self.topo.n_nodes()];
        for &n in self.topo.post_order() {
            let mut s = psi.version(n) + phi.version(n);
            if let Some(ch) = self.topo.children(n) {
                s += sub[ch[0]] + sub[ch[1]];
            }
            sub[n] = s;
        }
        let total = sub[self.topo.root()];
        (sub, total)
    }

    /// Which environments point towards the center: `(up, down)` flags.
    fn needed(&self) -> (Vec<bool>, Vec<bool>) {
        let n = self.topo.n_nodes();
        let mut up = vec![false; n];
        let mut down = vec![false; n];
        for m in 0..n {
            if m == self.topo.root() {
                continue;
            }
            if self.topo.node_in_subtree(m, self.center) {
                down[m] = true;
            } else {
                up[m] = true;
            }
        }
        (up, down)
    }

    /// Whether every environment facing the center matches the states.
    pub fn is_fresh(&self, psi: &TtnState, phi: &TtnState) -> bool {
        if self.ids != (psi.id(), phi.id()) {
            return false;
        }
        let (sub, total) = self.stamps(psi, phi);
        let (nu, nd) = self.needed();
        (0..self.topo.n_nodes()).all(|m| {
            (!nu[m] || self.up[m].as_ref().is_some_and(|e| e.stamp == sub[m]))
                && (!nd[m] || self.down[m].as_ref().is_some_and(|e| e.stamp == total - sub[m]))
        })
    }

    /// Recompute stale environments facing the center. Returns how many were
    /// rebuilt.
    pub fn refresh(&mut self, psi: &TtnState, phi: &TtnState) -> Result<usize> {
        if !psi.same_topology(phi) || !Arc::ptr_eq(&self.topo, psi.topology()) && *self.topo != **psi.topology() {
            return Err(Error::TopologyMismatch);
        }
        if self.ids != (psi.id(), phi.id()) {
            self.ids = (psi.id(), phi.id());
            self.up.iter_mut().for_each(|e| *e = None);
            self.down.iter_mut().for_each(|e| *e = None);
        }
        let (sub, total) = self.stamps(psi, phi);
        let (nu, nd) = self.needed();
        let mut count = 0;
        // up environments bottom-up; a parent's up env depends only on its
        // subtree, so post-order sees fresh children first
        for &m in self.topo.post_order() {
            if nu[m] && self.up[m].as_ref().is_none_or(|e| e.stamp != sub[m]) {
                let env = self.compute_up(psi, phi, m);
                self.up[m] = Some(Entry { stamp: sub[m], env });
                count += 1;
            }
        }
        // down environments top-down
        for &m in self.topo.post_order().iter().rev() {
            if nd[m] && self.down[m].as_ref().is_none_or(|e| e.stamp != total - sub[m]) {
                let env = self.compute_down(psi, phi, m);
                self.down[m] = Some(Entry { stamp: total - sub[m], env });
                count += 1;
            }
        }
        self.recomputed += count;
        Ok(count)
    }

    fn site_factor(&self, site: Option<usize>) -> Option<&Array2<C64>> {
        match (&self.op, site) {
            (Some(op), Some(s)) => op.factor_on(s),
            _ => None,
        }
    }

    fn up_env(&self, m: NodeId) -> &Array2<C64> {
        &self.up[m].as_ref().expect("up environment built").env
    }

    fn down_env(&self, m: NodeId) -> Option<&Array2<C64>> {
        if m == self.topo.root() {
            None
        } else {
            Some(&self.down[m].as_ref().expect("down environment built").env)
        }
    }

    /// The matrix acting on leg `leg` of node `n` when contracting from the
    /// far side of that leg; `None` means identity.
    fn leg_env(&self, n: NodeId, leg: usize) -> Option<&Array2<C64>> {
        match (&self.topo.node(n).kind, leg) {
            (_, 2) => self.down_env(n),
            (NodeKind::Leaf { sites }, l) => self.site_factor(sites[l]),
            (NodeKind::Internal { children }, l) => Some(self.up_env(children[l])),
        }
    }

    fn compute_up(&self, psi: &TtnState, phi: &TtnState, m: NodeId) -> Array2<C64> {
        let mut t = psi.tensor(m).clone();
        for leg in 0..2 {
            if let Some(e) = self.leg_env(m, leg) {
                t = apply_leg(&t, leg, e.view());
            }
        }
        project_out(phi.tensor(m), &t, 2)
    }

    fn compute_down(&self, psi: &TtnState, phi: &TtnState, m: NodeId) -> Array2<C64> {
        let p = self.topo.parent(m).expect("non-root");
        let l = self.topo.leg_towards(p, m);
        let mut t = psi.tensor(p).clone();
        for leg in [1 - l, 2] {
            if let Some(e) = self.leg_env(p, leg) {
                t = apply_leg(&t, leg, e.view());
            }
        }
        project_out(phi.tensor(p), &t, l)
    }

    /// Environment on the link between `n` and its neighbour `m`, contracted
    /// from `m`'s side.
    pub fn env_towards(&self, n: NodeId, m: NodeId) -> Option<&Array2<C64>> {
        if self.topo.parent(n) == Some(m) {
            self.down_env(n)
        } else {
            Some(self.up_env(m))
        }
    }

    /// `psi`'s center tensor with every leg mapped into `phi`'s basis.
    pub fn local_ket(&self, psi: &TtnState) -> ndarray::Array3<C64> {
        let c = self.center;
        let mut t = psi.tensor(c).clone();
        for leg in 0..3 {
            if let Some(e) = self.leg_env(c, leg) {
                t = apply_leg(&t, leg, e.view());
            }
        }
        t
    }

    /// Full value `<phi| O |psi>` from the cache.
    pub fn contract(&self, psi: &TtnState, phi: &TtnState) -> C64 {
        let t = self.local_ket(psi);
        let coeff = self.op.as_ref().map_or(ONE, |o| o.coefficient());
        coeff
            * vdot(
                phi.tensor(self.center).as_slice().expect("standard layout"),
                t.as_standard_layout().as_slice().expect("standard layout"),
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tree_topology, Boundary, LatticeGeometry};
    use crate::operators;
    use crate::ttn::{overlap, Spin};

    fn topo() -> Arc<TreeTopology> {
        let g = LatticeGeometry::square(3, Boundary::Periodic).unwrap();
        Arc::new(build_tree_topology(&g).unwrap())
    }

    #[test]
    fn contraction_matches_overlap_at_every_center() {
        let t = topo();
        let a = TtnState::random(t.clone(), 4, 1);
        let b = TtnState::random(t.clone(), 3, 2);
        let want = overlap(&a, &b).unwrap();
        for c in 0..t.n_nodes() {
            let cache = build_environments(&a, &b, None, c).unwrap();
            assert!((cache.contract(&a, &b) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn product_state_envs_are_single_site_overlaps() {
        let t = topo();
        let up = TtnState::product(t.clone(), &[Spin::Up; 9]).unwrap();
        let down = TtnState::vacuum(t.clone());
        let cache = build_environments(&up, &up, None, 0).unwrap();
        for m in 1..t.n_nodes() {
            assert!((cache.up_env(m)[[0, 0]] - ONE).norm() < 1e-15);
        }
        let cross = build_environments(&down, &up, None, 0).unwrap();
        for &l in t.leaves() {
            assert_eq!(cross.up_env(l)[[0, 0]].norm(), 0.0);
        }
    }

    #[test]
    fn operator_sandwich_matches_dense() {
        let t = topo();
        let a = TtnState::random(t.clone(), 4, 3);
        let op = LocalOperator::new(
            vec![0, 4, 8],
            vec![operators::pauli_x(), operators::pauli_z(), operators::number()],
            C64::new(0.5, 0.25),
        )
        .unwrap();
        let cache = build_environments(&a, &a, Some(op), t.leaves()[1]).unwrap();
        let v = a.to_dense().unwrap();
        let mut w = vec![C64::new(0.0, 0.0); v.len()];
        for (i, amp) in v.iter().enumerate() {
            // X on 0, Z on 4, n on 8 acting on basis state i
            let j = i ^ 1;
            let z4 = if i >> 4 & 1 == 0 { 1.0 } else { -1.0 };
            let n8 = if i >> 8 & 1 == 0 { 1.0 } else { 0.0 };
            w[j] += amp * z4 * n8;
        }
        let dense = C64::new(0.5, 0.25) * vdot(&v, &w);
        assert!((cache.contract(&a, &a) - dense).norm() < 1e-12);
    }

    #[test]
    fn stale_entries_are_detected_and_rebuilt() {
        let t = topo();
        let mut a = TtnState::random(t.clone(), 4, 4);
        let b = TtnState::random(t.clone(), 4, 5);
        let center = 0;
        let mut cache = build_environments(&a, &b, None, center).unwrap();
        assert!(cache.is_fresh(&a, &b));
        let leaf = t.leaves()[3];
        let changed = a.tensor(leaf).mapv(|z| z * C64::new(0.3, -0.7));
        a.set_tensor(leaf, changed).unwrap();
        assert!(!cache.is_fresh(&a, &b));
        let rebuilt = cache.refresh(&a, &b).unwrap();
        // leaf plus each ancestor below the root
        assert_eq!(rebuilt, t.path(leaf, center).len() - 1);
        let scratch = build_environments(&a, &b, None, center).unwrap();
        assert!((cache.contract(&a, &b) - scratch.contract(&a, &b)).norm() < 1e-14);
        assert!((cache.contract(&a, &b) - overlap(&a, &b).unwrap()).norm() < 1e-12);
    }
}
