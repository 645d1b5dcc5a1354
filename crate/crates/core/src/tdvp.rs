//! Single-site time-dependent variational principle on the tree.
//!
//! Each step is a symmetric pair of half-sweeps: a post-order sweep that
//! evolves every node forward by `dt/2` and every link backward, followed by
//! its exact reverse. The transverse field is frozen at the step midpoint.
//!
//! Hamiltonian environments are kept in three pieces so that a changing `g`
//! never forces a rebuild: the field-independent part, the transverse part
//! (`-sum X`, scaled by `g` when applied) and the open boundary operators
//! `Z_s` for sites whose bonds leave the region.

use std::sync::Arc;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::ising::{ramp_value, HamiltonianTerms, RampSchedule};
use crate::krylov::{evolve_adaptive, KrylovOptions};
use crate::lattice::{NodeId, NodeKind, TreeTopology};
use crate::operators::{pauli_x, pauli_z};
use crate::tensor::{apply_leg, dims3, project_out, qr_leg, vdot, C64, ZERO};
use crate::ttn::TtnState;

/// Transverse field as a function of time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldSchedule {
    Constant(f64),
    Ramp(RampSchedule),
}

impl FieldSchedule {
    pub fn at(&self, t: f64) -> Result<f64> {
        match self {
            FieldSchedule::Constant(g) => Ok(*g),
            FieldSchedule::Ramp(r) => ramp_value(t, r),
        }
    }
}

#[derive(Clone, Debug)]
struct HEnv {
    stat: Array2<C64>,
    x: Array2<C64>,
    /// `(site, Z_site)` for sites with bonds leaving the region.
    open: Vec<(usize, Array2<C64>)>,
    region: Vec<bool>,
}

impl HEnv {
    fn empty(d: usize, n_sites: usize) -> Self {
        Self {
            stat: Array2::zeros((d, d)),
            x: Array2::zeros((d, d)),
            open: Vec::new(),
            region: vec![false; n_sites],
        }
    }

    fn single(site: usize, terms: &HamiltonianTerms, has_bonds: bool) -> Self {
        let mut region = vec![false; terms.n_sites()];
        region[site] = true;
        let z = pauli_z();
        Self {
            stat: z.mapv(|v| v * -terms.params.h),
            x: pauli_x().mapv(|v| -v),
            open: if has_bonds { vec![(site, z)] } else { Vec::new() },
            region,
        }
    }

    fn local(&self, g: f64) -> Array2<C64> {
        &self.stat + &self.x.mapv(|v| v * g)
    }
}

/// `(a, A, b, B)` with `H ⊃ A on leg a times B on leg b`.
type CrossTerm = (usize, Array2<C64>, usize, Array2<C64>);

/// Cross terms between the open operators of two regions.
fn cross_terms(adj: &[Vec<usize>], j: f64, a: usize, ea: &HEnv, b: usize, eb: &HEnv) -> Vec<CrossTerm> {
    let mut out = Vec::new();
    for (s, za) in &ea.open {
        let mut sum: Option<Array2<C64>> = None;
        for (t, zb) in &eb.open {
            let mult = adj[*s].iter().filter(|&&u| u == *t).count();
            if mult > 0 {
                let term = zb.mapv(|v| v * (-j * mult as f64));
                sum = Some(match sum {
                    Some(acc) => acc + term,
                    None => term,
                });
            }
        }
        if let Some(bm) = sum {
            out.push((a, za.clone(), b, bm));
        }
    }
    out
}

fn to_vec(t: &Array3<C64>) -> Vec<C64> {
    t.iter().cloned().collect()
}

fn from_vec(v: Vec<C64>, d: [usize; 3]) -> Array3<C64> {
    Array3::from_shape_vec((d[0], d[1], d[2]), v).expect("length matches")
}

/// TDVP integrator bound to one Hamiltonian; holds environments for the
/// state it last touched and rebuilds them if the state changed elsewhere.
pub struct TdvpEngine {
    topo: Arc<TreeTopology>,
    terms: HamiltonianTerms,
    adj: Vec<Vec<usize>>,
    phys: Vec<Option<[HEnv; 2]>>,
    up: Vec<HEnv>,
    down: Vec<HEnv>,
    pub krylov: KrylovOptions,
    synced: Option<(u64, Vec<u64>)>,
}

impl TdvpEngine {
    pub fn new(topo: Arc<TreeTopology>, terms: HamiltonianTerms) -> Result<Self> {
        if *topo.geometry() != terms.geometry {
            return Err(Error::TopologyMismatch);
        }
        let n_sites = terms.n_sites();
        let mut adj = vec![Vec::new(); n_sites];
        for &(a, b) in &terms.zz_bonds {
            adj[a].push(b);
            adj[b].push(a);
        }
        let phys = (0..topo.n_nodes())
            .map(|n| match &topo.node(n).kind {
                NodeKind::Leaf { sites } => Some(sites.map(|s| match s {
                    Some(s) => HEnv::single(s, &terms, !adj[s].is_empty()),
                    None => HEnv::empty(1, n_sites),
                })),
                NodeKind::Internal { .. } => None,
            })
            .collect();
        let blank = HEnv::empty(1, n_sites);
        Ok(Self {
            up: vec![blank.clone(); topo.n_nodes()],
            down: vec![blank; topo.n_nodes()],
            topo,
            terms,
            adj,
            phys,
            krylov: KrylovOptions { dim: 24, tol: 1e-10 },
            synced: None,
        })
    }

    pub fn terms(&self) -> &HamiltonianTerms {
        &self.terms
    }

    fn leg_env(&self, n: NodeId, leg: usize) -> &HEnv {
        if leg == 2 {
            return &self.down[n];
        }
        match &self.topo.node(n).kind {
            NodeKind::Leaf { .. } => &self.phys[n].as_ref().expect("leaf")[leg],
            NodeKind::Internal { children } => &self.up[children[leg]],
        }
    }

    /// Environment on leg `out` of `t`, from the environments on the other
    /// two legs of node `n`. `t` must be an isometry towards `out`.
    fn contract_env(&self, n: NodeId, t: &Array3<C64>, out: usize) -> HEnv {
        let legs: Vec<usize> = (0..3).filter(|&l| l != out).collect();
        let (la, lb) = (legs[0], legs[1]);
        let (ea, eb) = (self.leg_env(n, la), self.leg_env(n, lb));
        let region: Vec<bool> = ea.region.iter().zip(&eb.region).map(|(a, b)| *a || *b).collect();

        let mut k = apply_leg(t, la, ea.stat.view()) + apply_leg(t, lb, eb.stat.view());
        for (a, am, b, bm) in cross_terms(&self.adj, self.terms.params.j, la, ea, lb, eb) {
            k = k + apply_leg(&apply_leg(t, a, am.view()), b, bm.view());
        }
        let stat = project_out(t, &k, out);
        let kx = apply_leg(t, la, ea.x.view()) + apply_leg(t, lb, eb.x.view());
        let x = project_out(t, &kx, out);

        let mut open = Vec::new();
        for (leg, e) in [(la, ea), (lb, eb)] {
            for (s, z) in &e.open {
                if self.adj[*s].iter().any(|&u| !region[u]) {
                    open.push((*s, project_out(t, &apply_leg(t, leg, z.view()), out)));
                }
            }
        }
        open.sort_by_key(|(s, _)| *s);
        HEnv { stat, x, open, region }
    }

    /// Canonicalize at the root and rebuild upward environments, unless the
    /// state is the one left by the previous step.
    fn sync(&mut self, state: &mut TtnState) -> Result<()> {
        if !Arc::ptr_eq(state.topology(), &self.topo) && **state.topology() != *self.topo {
            return Err(Error::TopologyMismatch);
        }
        let root = self.topo.root();
        if let Some((id, v)) = &self.synced {
            if *id == state.id() && v.as_slice() == state.versions() && state.center() == Some(root) {
                return Ok(());
            }
        }
        state.canonicalize(root)?;
        let topo = self.topo.clone();
        for &n in topo.post_order() {
            if n != root {
                self.up[n] = self.contract_env(n, state.tensor(n), 2);
            }
        }
        self.down[root] = HEnv::empty(1, self.terms.n_sites());
        self.synced = Some((state.id(), state.versions().to_vec()));
        Ok(())
    }

    fn node_hamiltonian(&self, n: NodeId, g: f64) -> (Vec<Array2<C64>>, Vec<CrossTerm>) {
        let envs = [self.leg_env(n, 0), self.leg_env(n, 1), self.leg_env(n, 2)];
        let singles = envs.iter().map(|e| e.local(g)).collect();
        let j = self.terms.params.j;
        let mut cross = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            // iterate over the side with fewer open operators
            let (a, b) = if envs[a].open.len() <= envs[b].open.len() { (a, b) } else { (b, a) };
            cross.extend(cross_terms(&self.adj, j, a, envs[a], b, envs[b]));
        }
        (singles, cross)
    }

    fn apply_node(singles: &[Array2<C64>], cross: &[CrossTerm], t: &Array3<C64>) -> Array3<C64> {
        let mut out = Array3::<C64>::zeros(t.dim());
        for (l, m) in singles.iter().enumerate() {
            if m.iter().any(|z| *z != ZERO) {
                out = out + apply_leg(t, l, m.view());
            }
        }
        for (a, am, b, bm) in cross {
            out = out + apply_leg(&apply_leg(t, *a, am.view()), *b, bm.view());
        }
        out
    }

    fn evolve_node(&self, state: &mut TtnState, n: NodeId, tau: f64, g: f64) -> Result<()> {
        let (singles, cross) = self.node_hamiltonian(n, g);
        let t = state.tensor(n);
        let d = dims3(t);
        let v = evolve_adaptive(
            |x| to_vec(&Self::apply_node(&singles, &cross, &from_vec(x.to_vec(), d))),
            &to_vec(t),
            tau,
            self.krylov,
        )?;
        state.put(n, from_vec(v, d));
        Ok(())
    }

    /// Evolve a link matrix `c[up, down]` on the link above `n` by time `tau`.
    fn evolve_link(&self, n: NodeId, c: Array2<C64>, tau: f64, g: f64) -> Result<Array2<C64>> {
        let (u, dn) = (&self.up[n], &self.down[n]);
        let um = u.local(g);
        let dt = dn.local(g).reversed_axes();
        let cross: Vec<(Array2<C64>, Array2<C64>)> = cross_terms(&self.adj, self.terms.params.j, 0, u, 1, dn)
            .into_iter()
            .map(|(_, a, _, b)| (a, b.reversed_axes()))
            .collect();
        let shape = c.dim();
        let apply = |x: &[C64]| {
            let m = Array2::from_shape_vec(shape, x.to_vec()).expect("length matches");
            let mut out = um.dot(&m) + m.dot(&dt);
            for (a, bt) in &cross {
                out = out + a.dot(&m).dot(bt);
            }
            out.iter().cloned().collect::<Vec<_>>()
        };
        let v = evolve_adaptive(apply, &c.iter().cloned().collect::<Vec<_>>(), tau, self.krylov)?;
        Ok(Array2::from_shape_vec(shape, v).expect("length matches"))
    }

    fn gauge_down(&mut self, s: &mut TtnState, n: NodeId, leg: usize, c: NodeId, link: Option<(f64, f64)>) -> Result<()> {
        let (q, r) = qr_leg(s.tensor(n), leg)?;
        self.down[c] = self.contract_env(n, &q, leg);
        s.put(n, q);
        // r[down, up]
        let r = match link {
            Some((tau, g)) => self.evolve_link(c, r.reversed_axes(), -tau, g)?.reversed_axes(),
            None => r,
        };
        let absorbed = apply_leg(s.tensor(c), 2, r.view());
        s.put(c, absorbed);
        Ok(())
    }

    fn gauge_up(&mut self, s: &mut TtnState, c: NodeId, n: NodeId, leg: usize, link: Option<(f64, f64)>) -> Result<()> {
        let (q, r) = qr_leg(s.tensor(c), 2)?;
        self.up[c] = self.contract_env(c, &q, 2);
        s.put(c, q);
        let r = match link {
            Some((tau, g)) => self.evolve_link(c, r, -tau, g)?,
            None => r,
        };
        let absorbed = apply_leg(s.tensor(n), leg, r.view());
        s.put(n, absorbed);
        Ok(())
    }

    fn forward(&mut self, s: &mut TtnState, n: NodeId, tau: f64, g: f64) -> Result<()> {
        if let Some(ch) = self.topo.children(n) {
            for (leg, c) in ch.into_iter().enumerate() {
                self.gauge_down(s, n, leg, c, None)?;
                self.forward(s, c, tau, g)?;
                self.gauge_up(s, c, n, leg, Some((tau, g)))?;
            }
        }
        self.evolve_node(s, n, tau, g)
    }

    fn backward(&mut self, s: &mut TtnState, n: NodeId, tau: f64, g: f64) -> Result<()> {
        self.evolve_node(s, n, tau, g)?;
        if let Some(ch) = self.topo.children(n) {
            for (leg, c) in ch.into_iter().enumerate().rev() {
                self.gauge_down(s, n, leg, c, Some((tau, g)))?;
                self.backward(s, c, tau, g)?;
                self.gauge_up(s, c, n, leg, None)?;
            }
        }
        Ok(())
    }

    /// One symmetric step of length `dt` with transverse field `g`.
    pub fn step(&mut self, state: &mut TtnState, dt: f64, g: f64) -> Result<()> {
        self.sync(state)?;
        let root = self.topo.root();
        self.forward(state, root, dt / 2.0, g)?;
        self.backward(state, root, dt / 2.0, g)?;
        state.set_center_unchecked(Some(root));
        self.synced = Some((state.id(), state.versions().to_vec()));
        Ok(())
    }

    /// `<H>` at field `g` from the root environments.
    pub fn energy(&mut self, state: &mut TtnState, g: f64) -> Result<f64> {
        self.sync(state)?;
        let root = self.topo.root();
        let (singles, cross) = self.node_hamiltonian(root, g);
        let t = state.tensor(root);
        let ht = Self::apply_node(&singles, &cross, t);
        let num = vdot(&to_vec(t), &to_vec(&ht));
        Ok(num.re / crate::tensor::norm_sqr(t))
    }

    /// Run `n_steps` steps from `t0`, with the field of each step taken at
    /// its midpoint. `after_step(k, t, state)` runs after step `k` (1-based).
    pub fn run<F>(
        &mut self,
        state: &mut TtnState,
        schedule: &FieldSchedule,
        t0: f64,
        dt: f64,
        n_steps: usize,
        mut after_step: F,
    ) -> Result<f64>
    where
        F: FnMut(usize, f64, &mut TtnState) -> Result<()>,
    {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParams(format!("time step must be positive, got {dt}")));
        }
        let mut t = t0;
        for k in 1..=n_steps {
            let g = schedule.at(t + dt / 2.0)?;
            self.step(state, dt, g)?;
            t = t0 + k as f64 * dt;
            after_step(k, t, state)?;
        }
        Ok(t)
    }
}

/// Settings for [`evolve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Ramp for `g`; the constant field of the Hamiltonian terms otherwise.
    pub schedule: Option<RampSchedule>,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub measure_every: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_start: 0.0,
            t_end: 0.0,
            schedule: None,
            krylov_dim: 30,
            krylov_tol: 1e-12,
            measure_every: 10,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!("time step must be positive, got {}", self.dt)));
        }
        if self.krylov_dim < 2 {
            return Err(Error::InvalidParams("krylov_dim must be at least 2".into()));
        }
        if !(self.t_end >= self.t_start) {
            return Err(Error::InvalidParams("t_end before t_start".into()));
        }
        if self.measure_every == 0 {
            return Err(Error::InvalidParams("measure_every must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps, `(t_end - t_start) / dt` rounded to the nearest
    /// integer.
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn field(&self, terms: &HamiltonianTerms) -> FieldSchedule {
        match self.schedule {
            Some(r) => FieldSchedule::Ramp(r),
            None => FieldSchedule::Constant(terms.params.g),
        }
    }
}

/// Evolve from `t_start` to `t_end`. `hook(t, state)` runs at the start and
/// after every `measure_every` steps.
pub fn evolve<F>(state: &mut TtnState, terms: &HamiltonianTerms, cfg: &EvolutionConfig, mut hook: F) -> Result<f64>
where
    F: FnMut(f64, &TtnState) -> Result<()>,
{
    cfg.validate()?;
    let mut engine = TdvpEngine::new(state.topology().clone(), terms.clone())?;
    engine.krylov = KrylovOptions { dim: cfg.krylov_dim, tol: cfg.krylov_tol };
    hook(cfg.t_start, state)?;
    let every = cfg.measure_every;
    engine.run(state, &cfg.field(terms), cfg.t_start, cfg.dt, cfg.n_steps(), |k, t, s| {
        if k % every == 0 {
            hook(t, s)?;
        }
        Ok(())
    })
}
