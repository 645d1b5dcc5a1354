//! Variational summation `psi ~ sum_i alpha_i phi_i` with effective
//! projectors.
//!
//! The center of `psi` visits every node in post-order. At node `p` each
//! summand is projected onto the current basis of `psi` on the three legs of
//! `p`, and `psi[p]` is overwritten with the weighted sum of the projections.
//! For summands that are computational basis states the projections of all
//! summands are stored as one matrix per link, which keeps sums of many
//! thousands of product states cheap.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::env::EnvironmentCache;
use crate::error::{Error, Result};
use crate::lattice::{NodeId, NodeKind};
use crate::tensor::{mat, unmat, C64, ONE, ZERO};
use crate::ttn::{overlap, Spin, TtnState};

pub struct SumProblem {
    pub summands: Vec<TtnState>,
    pub amplitudes: Vec<C64>,
    pub initial_guess: TtnState,
    pub max_sweeps: usize,
    pub target_error: f64,
}

impl SumProblem {
    pub fn new(summands: Vec<TtnState>, amplitudes: Vec<C64>, initial_guess: TtnState) -> Self {
        Self { summands, amplitudes, initial_guess, max_sweeps: 3, target_error: 1e-12 }
    }
}

/// A computational basis state with its amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTerm {
    pub amplitude: C64,
    pub spins: Vec<Spin>,
}

pub struct BasisSumProblem {
    pub terms: Vec<BasisTerm>,
    pub initial_guess: TtnState,
    pub max_sweeps: usize,
    pub target_error: f64,
}

impl BasisSumProblem {
    pub fn new(terms: Vec<BasisTerm>, initial_guess: TtnState) -> Self {
        Self { terms, initial_guess, max_sweeps: 3, target_error: 1e-12 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SumReport {
    /// Error after the last sweep, before the final normalization.
    pub error: f64,
    pub sweep_errors: Vec<f64>,
    /// False if some sweep increased the error by more than round-off.
    pub monotone: bool,
    /// Norm of the unnormalized result.
    pub norm: f64,
}

/// `sum_i |alpha_i - <phi_i|psi>|`.
pub fn sum_error(psi: &TtnState, problem: &SumProblem) -> Result<f64> {
    let mut e = 0.0;
    for (phi, a) in problem.summands.iter().zip(&problem.amplitudes) {
        e += (a - overlap(psi, phi)?).norm();
    }
    Ok(e)
}

trait Projector {
    fn center_moved(&mut self, psi: &TtnState, from: NodeId, to: NodeId) -> Result<()>;
    /// Weighted sum of projections at the current center.
    fn local_target(&mut self, psi: &TtnState, p: NodeId) -> Result<Array3<C64>>;
    /// `<phi_i|psi>` with the center of `psi` at the root.
    fn overlaps(&mut self, psi: &TtnState) -> Result<Vec<C64>>;
    fn amplitudes(&self) -> &[C64];
}

fn run_sweeps(
    mut psi: TtnState,
    proj: &mut dyn Projector,
    max_sweeps: usize,
    target: f64,
) -> Result<(TtnState, SumReport)> {
    let topo = psi.topology().clone();
    let root = topo.root();
    let mut errors = Vec::new();
    let mut monotone = true;
    for _ in 0..max_sweeps.max(1) {
        for &p in topo.post_order() {
            let from = psi.center().expect("canonical");
            for w in topo.path(from, p).windows(2) {
                psi.shift(w[0], w[1])?;
                proj.center_moved(&psi, w[0], w[1])?;
            }
            psi.set_center_unchecked(Some(p));
            let t = proj.local_target(&psi, p)?;
            psi.put(p, t);
        }
        debug_assert_eq!(psi.center(), Some(root));
        let ov = proj.overlaps(&psi)?;
        let e: f64 = proj.amplitudes().iter().zip(&ov).map(|(a, o)| (a - o).norm()).sum();
        if let Some(&last) = errors.last() {
            if e > last + 1e-12 {
                monotone = false;
            }
        }
        errors.push(e);
        if e <= target {
            break;
        }
    }
    let norm = psi.normalize();
    if norm == 0.0 {
        return Err(Error::InvalidSum("sum vanished on the variational manifold".into()));
    }
    let error = *errors.last().expect("at least one sweep");
    Ok((psi, SumReport { error, sweep_errors: errors, monotone, norm }))
}

struct CacheProjector<'a> {
    summands: &'a [TtnState],
    amplitudes: &'a [C64],
    caches: Vec<EnvironmentCache>,
}

impl Projector for CacheProjector<'_> {
    fn center_moved(&mut self, _: &TtnState, _: NodeId, _: NodeId) -> Result<()> {
        Ok(())
    }

    fn local_target(&mut self, psi: &TtnState, p: NodeId) -> Result<Array3<C64>> {
        let summands = self.summands;
        self.caches
            .par_iter_mut()
            .zip(summands.par_iter())
            .try_for_each(|(c, phi)| {
                c.set_center(p);
                c.refresh(phi, psi).map(|_| ())
            })?;
        let mut acc = Array3::<C64>::zeros(psi.tensor(p).dim());
        for ((c, phi), a) in self.caches.iter().zip(summands).zip(self.amplitudes) {
            acc.scaled_add(*a, &c.local_ket(phi));
        }
        Ok(acc)
    }

    fn overlaps(&mut self, psi: &TtnState) -> Result<Vec<C64>> {
        let root = psi.topology().root();
        let mut out = Vec::with_capacity(self.caches.len());
        for (c, phi) in self.caches.iter_mut().zip(self.summands) {
            c.set_center(root);
            c.refresh(phi, psi)?;
            out.push(c.contract(phi, psi).conj());
        }
        Ok(out)
    }

    fn amplitudes(&self) -> &[C64] {
        self.amplitudes
    }
}

fn check_common(n_terms: usize, n_amps: usize) -> Result<()> {
    if n_terms == 0 {
        return Err(Error::InvalidSum("no summands".into()));
    }
    if n_terms != n_amps {
        return Err(Error::InvalidSum(format!("{n_terms} summands but {n_amps} amplitudes")));
    }
    Ok(())
}

/// Fit `problem.initial_guess` (its bond dimensions are kept) to the sum.
pub fn sum_approximate(problem: &SumProblem) -> Result<(TtnState, SumReport)> {
    check_common(problem.summands.len(), problem.amplitudes.len())?;
    let mut psi = problem.initial_guess.clone();
    if problem.summands.iter().any(|s| !s.same_topology(&psi)) {
        return Err(Error::TopologyMismatch);
    }
    let root = psi.topology().root();
    psi.canonicalize(root)?;
    let caches = problem
        .summands
        .iter()
        .map(|phi| EnvironmentCache::new(phi, &psi, None, root))
        .collect::<Result<Vec<_>>>()?;
    let mut proj = CacheProjector {
        summands: &problem.summands,
        amplitudes: &problem.amplitudes,
        caches,
    };
    run_sweeps(psi, &mut proj, problem.max_sweeps, problem.target_error)
}

/// Row-wise Kronecker product: `out[i, (p, q)] = a[i, p] b[i, q]`.
fn row_kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (s, p) = a.dim();
    let q = b.ncols();
    let mut out = Array2::zeros((s, p * q));
    for i in 0..s {
        let mut row = out.row_mut(i);
        for x in 0..p {
            let ax = a[[i, x]];
            if ax == ZERO {
                continue;
            }
            for y in 0..q {
                row[x * q + y] = ax * b[[i, y]];
            }
        }
    }
    out
}

struct BasisProjector {
    amplitudes: Vec<C64>,
    /// physical index per (summand, site)
    config: Array2<u8>,
    up: Vec<Array2<C64>>,
    down: Vec<Array2<C64>>,
}

impl BasisProjector {
    fn new(terms: &[BasisTerm], psi: &TtnState) -> Self {
        let topo = psi.topology();
        let n_sites = topo.geometry().n_sites();
        let s = terms.len();
        let config = Array2::from_shape_fn((s, n_sites), |(i, j)| terms[i].spins[j].index() as u8);
        let mut me = Self {
            amplitudes: terms.iter().map(|t| t.amplitude).collect(),
            config,
            up: vec![Array2::zeros((0, 0)); topo.n_nodes()],
            down: vec![Array2::zeros((0, 0)); topo.n_nodes()],
        };
        for &n in topo.post_order() {
            me.up[n] = me.compute_up(psi, n);
        }
        me.down[topo.root()] = Array2::from_elem((s, 1), ONE);
        me
    }

    /// One-hot rows of the physical index on leaf leg `leg`.
    fn physical(&self, psi: &TtnState, leaf: NodeId, leg: usize) -> Array2<C64> {
        let topo = psi.topology();
        let s = self.config.nrows();
        match &topo.node(leaf).kind {
            NodeKind::Leaf { sites } => match sites[leg] {
                Some(site) => {
                    let mut m = Array2::zeros((s, 2));
                    for i in 0..s {
                        m[[i, self.config[[i, site]] as usize]] = ONE;
                    }
                    m
                }
                None => Array2::from_elem((s, 1), ONE),
            },
            NodeKind::Internal { .. } => unreachable!(),
        }
    }

    fn leg_rows(&self, psi: &TtnState, n: NodeId, leg: usize) -> Array2<C64> {
        let topo = psi.topology();
        match (topo.children(n), leg) {
            (_, 2) => self.down[n].clone(),
            (Some(ch), l) => self.up[ch[l]].clone(),
            (None, l) => self.physical(psi, n, l),
        }
    }

    fn compute_up(&self, psi: &TtnState, n: NodeId) -> Array2<C64> {
        let t = psi.tensor(n);
        let k = row_kron(&self.leg_rows(psi, n, 0), &self.leg_rows(psi, n, 1));
        let m = mat(t.view(), 2).mapv(|z| z.conj()); // a x (b0 b1)
        k.dot(&m.t())
    }

    fn compute_down(&self, psi: &TtnState, child: NodeId) -> Array2<C64> {
        let topo = psi.topology();
        let p = topo.parent(child).expect("non-root");
        let l = topo.leg_towards(p, child);
        let other = self.leg_rows(psi, p, 1 - l);
        let k = row_kron(&other, &self.down[p]);
        let m = mat(psi.tensor(p).view(), l).mapv(|z| z.conj()); // b_l x (b_other a)
        k.dot(&m.t())
    }
}

impl Projector for BasisProjector {
    fn center_moved(&mut self, psi: &TtnState, from: NodeId, to: NodeId) -> Result<()> {
        let topo = psi.topology();
        if topo.parent(from) == Some(to) {
            self.up[from] = self.compute_up(psi, from);
        } else {
            self.down[to] = self.compute_down(psi, to);
        }
        Ok(())
    }

    fn local_target(&mut self, psi: &TtnState, p: NodeId) -> Result<Array3<C64>> {
        let dims = crate::tensor::dims3(psi.tensor(p));
        let k = row_kron(&self.leg_rows(psi, p, 0), &self.leg_rows(psi, p, 1));
        let mut w = self.down[p].clone();
        for (mut row, a) in w.axis_iter_mut(Axis(0)).zip(&self.amplitudes) {
            row.mapv_inplace(|z| z * a);
        }
        let m = w.t().dot(&k); // a x (b0 b1)
        Ok(unmat(m, 2, dims))
    }

    fn overlaps(&mut self, psi: &TtnState) -> Result<Vec<C64>> {
        let root = psi.topology().root();
        Ok(self.compute_up(psi, root).column(0).iter().map(|z| z.conj()).collect())
    }

    fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
}

/// Fit the initial guess to a superposition of basis states.
pub fn sum_basis_states(problem: &BasisSumProblem) -> Result<(TtnState, SumReport)> {
    check_common(problem.terms.len(), problem.terms.len())?;
    let mut psi = problem.initial_guess.clone();
    let n_sites = psi.topology().geometry().n_sites();
    if let Some(t) = problem.terms.iter().find(|t| t.spins.len() != n_sites) {
        return Err(Error::InvalidSum(format!(
            "basis term with {} spins on {n_sites} sites",
            t.spins.len()
        )));
    }
    psi.canonicalize(psi.topology().root())?;
    let mut proj = BasisProjector::new(&problem.terms, &psi);
    run_sweeps(psi, &mut proj, problem.max_sweeps, problem.target_error)
}

/// `sum_i |alpha_i - <b_i|psi>|` for basis-state summands.
pub fn basis_sum_error(psi: &TtnState, terms: &[BasisTerm]) -> Result<f64> {
    let mut psi = psi.clone();
    psi.canonicalize(psi.topology().root())?;
    let mut proj = BasisProjector::new(terms, &psi);
    let ov = proj.overlaps(&psi)?;
    Ok(terms.iter().zip(&ov).map(|(t, o)| (t.amplitude - o).norm()).sum())
}
