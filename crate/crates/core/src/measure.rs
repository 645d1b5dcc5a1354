//! Expectation values of local operators.
//!
//! A [`MeasurementContext`] canonicalizes a copy of the state at the root and
//! stores the reduced density matrix on every link. An operator then only
//! needs to be contracted from its support up to the lowest common ancestor
//! of its sites; the subtrees it does not touch are isometries and drop out.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::lattice::{NodeId, NodeKind};
use crate::operators::LocalOperator;
use crate::tensor::{apply_leg, project_out, C64, ONE};
use crate::ttn::TtnState;

pub struct MeasurementContext {
    state: TtnState,
    /// rho[n][a', a] on the link above `n`.
    rho: Vec<Array2<C64>>,
}

impl MeasurementContext {
    pub fn new(state: &TtnState) -> Result<Self> {
        let mut state = state.clone();
        let topo = state.topology().clone();
        state.canonicalize(topo.root())?;
        let norm = state.norm_sqr();
        if !(norm > 0.0) {
            return Err(Error::InvalidParams("cannot measure a zero state".into()));
        }
        let mut rho: Vec<Array2<C64>> = vec![Array2::zeros((0, 0)); topo.n_nodes()];
        rho[topo.root()] = Array2::from_elem((1, 1), C64::new(1.0 / norm, 0.0));
        for &n in topo.post_order().iter().rev() {
            if let Some(ch) = topo.children(n) {
                let t = state.tensor(n);
                let u = apply_leg(t, 2, rho[n].view());
                for (leg, c) in ch.into_iter().enumerate() {
                    rho[c] = project_out(t, &u, leg);
                }
            }
        }
        Ok(Self { state, rho })
    }

    pub fn state(&self) -> &TtnState {
        &self.state
    }

    /// `<O>` for a normalized copy of the state.
    pub fn expect(&self, op: &LocalOperator) -> Result<C64> {
        let topo = self.state.topology();
        let n_sites = topo.geometry().n_sites();
        if let Some(&s) = op.support().iter().find(|&&s| s >= n_sites) {
            return Err(Error::InvalidOperator(format!("site {s} outside {n_sites}-site lattice")));
        }
        let leaves: Vec<NodeId> = op.support().iter().map(|&s| topo.site_leaf(s).0).collect();
        let lca = topo.lowest_common_ancestor(&leaves);
        let env = self.contract_up(lca, op);
        let r = &self.rho[lca];
        let mut acc = C64::new(0.0, 0.0);
        for ((i, j), e) in env.indexed_iter() {
            acc += e * r[[i, j]];
        }
        Ok(op.coefficient() * acc)
    }

    pub fn expect_real(&self, op: &LocalOperator) -> Result<f64> {
        Ok(self.expect(op)?.re)
    }

    /// Operator environment on the link above `n`, or `None` if no support
    /// site lies below `n`.
    fn contract_up(&self, n: NodeId, op: &LocalOperator) -> Array2<C64> {
        self.contract_up_opt(n, op).unwrap_or_else(|| {
            let d = self.state.bond_dim(n);
            Array2::from_diag_elem(d, ONE)
        })
    }

    fn contract_up_opt(&self, n: NodeId, op: &LocalOperator) -> Option<Array2<C64>> {
        let topo = self.state.topology();
        if !op.support().iter().any(|&s| topo.site_in_subtree(n, s)) {
            return None;
        }
        let t = self.state.tensor(n);
        let mut k = t.clone();
        match &topo.node(n).kind {
            NodeKind::Leaf { sites } => {
                for (leg, s) in sites.iter().enumerate() {
                    if let Some(f) = s.and_then(|s| op.factor_on(s)) {
                        k = apply_leg(&k, leg, f.view());
                    }
                }
            }
            NodeKind::Internal { children } => {
                for (leg, &c) in children.iter().enumerate() {
                    if let Some(e) = self.contract_up_opt(c, op) {
                        k = apply_leg(&k, leg, e.view());
                    }
                }
            }
        }
        Some(project_out(t, &k, 2))
    }

    /// `<Z_i>` for every site.
    pub fn z_field(&self) -> Result<Vec<f64>> {
        let n = self.state.topology().geometry().n_sites();
        (0..n).map(|i| self.expect_real(&LocalOperator::z(i))).collect()
    }

    /// `<n_i>` for every site.
    pub fn n_field(&self) -> Result<Vec<f64>> {
        let n = self.state.topology().geometry().n_sites();
        (0..n).map(|i| self.expect_real(&LocalOperator::n(i))).collect()
    }
}

/// One-off `<psi| O |psi> / <psi|psi>`.
pub fn expect(state: &TtnState, op: &LocalOperator) -> Result<C64> {
    MeasurementContext::new(state)?.expect(op)
}
