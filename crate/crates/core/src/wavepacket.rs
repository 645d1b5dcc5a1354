//! Gaussian magnon wave packets on the polarized vacuum and their adiabatic
//! dressing to finite transverse field.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{build_terms, energy, is_commensurate, phase, IsingParams, RampSchedule, RampShape};
use crate::lattice::{Boundary, LatticeGeometry, SiteCoord, TreeTopology};
use crate::measure::MeasurementContext;
use crate::sum::{sum_basis_states, BasisSumProblem, BasisTerm, SumReport};
use crate::tdvp::{evolve, EvolutionConfig};
use crate::tensor::C64;
use crate::ttn::{Spin, TtnState};

pub const DEFAULT_CUTOFF: f64 = 1e-8;

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}

/// A Gaussian packet `f(r - r0) e^{i k.r}` of single flips.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacketSpec {
    pub center: SiteCoord,
    pub k: (f64, f64),
    pub sigma: f64,
    /// Terms with `|f| / N` below this are dropped, `N = sqrt(sites)`.
    #[serde(default = "default_cutoff")]
    pub amplitude_cutoff: f64,
}

impl WavePacketSpec {
    pub fn new(center: SiteCoord, k: (f64, f64), sigma: f64) -> Self {
        Self { center, k, sigma, amplitude_cutoff: DEFAULT_CUTOFF }
    }

    pub fn validate(&self, geom: &LatticeGeometry) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidPacket(format!("width must be positive, got {}", self.sigma)));
        }
        if !(self.amplitude_cutoff >= 0.0) {
            return Err(Error::InvalidPacket("amplitude cutoff must be non-negative".into()));
        }
        geom.wrap(self.center)?;
        if geom.boundary() == Boundary::Periodic && !is_commensurate(geom, self.k) {
            return Err(Error::InvalidPacket(format!(
                "momentum ({}, {}) is not a lattice momentum",
                self.k.0, self.k.1
            )));
        }
        Ok(())
    }
}

/// Normalized packet amplitudes on the sites that survive the cutoff,
/// ordered by site index.
pub fn packet_terms(spec: &WavePacketSpec, geom: &LatticeGeometry) -> Result<Vec<(C64, SiteCoord)>> {
    spec.validate(geom)?;
    let r0 = geom.wrap(spec.center)?;
    let side = (geom.n_sites() as f64).sqrt();
    let pref = 1.0 / (spec.sigma * std::f64::consts::PI.sqrt());
    let mut terms = Vec::new();
    for s in 0..geom.n_sites() {
        let r = geom.coord_of(s);
        let f = pref * (-geom.distance_sqr(r, r0) / (2.0 * spec.sigma * spec.sigma)).exp();
        if f / side >= spec.amplitude_cutoff && f > 0.0 {
            terms.push((C64::from_polar(f, phase(spec.k, r)), r));
        }
    }
    if terms.is_empty() {
        return Err(Error::InvalidPacket("cutoff removes every term".into()));
    }
    let norm = terms.iter().map(|(a, _)| a.norm_sqr()).sum::<f64>().sqrt();
    for (a, _) in &mut terms {
        *a /= norm;
    }
    Ok(terms)
}

/// Largest total weight of product terms with coincident flips that is
/// dropped silently when combining packets.
pub const MAX_OVERLAP_WEIGHT: f64 = 1e-3;

/// Basis-state expansion of a product of packets on the all-down vacuum,
/// one term per distinct set of flipped sites, ordered by that set.
pub fn packet_basis_terms(specs: &[WavePacketSpec], geom: &LatticeGeometry) -> Result<Vec<BasisTerm>> {
    let mut combos: Vec<(C64, Vec<usize>)> = vec![(C64::new(1.0, 0.0), Vec::new())];
    let mut dropped = 0.0;
    for spec in specs {
        let terms = packet_terms(spec, geom)?;
        let mut next = Vec::with_capacity(combos.len() * terms.len());
        for (a, sites) in &combos {
            for (b, r) in &terms {
                let s = geom.site_index(*r)?;
                if sites.contains(&s) {
                    dropped += (a * b).norm_sqr();
                    continue;
                }
                let mut v = sites.clone();
                v.push(s);
                next.push((a * b, v));
            }
        }
        combos = next;
    }
    if dropped > MAX_OVERLAP_WEIGHT {
        return Err(Error::InvalidPacket(format!("packets overlap (weight {dropped:.2e} on shared sites)")));
    }
    // Products differing only in the order of flips are the same state.
    let mut merged: BTreeMap<Vec<usize>, C64> = BTreeMap::new();
    for (a, mut sites) in combos {
        sites.sort_unstable();
        *merged.entry(sites).or_insert(C64::new(0.0, 0.0)) += a;
    }
    let norm = merged.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Ok(merged
        .into_iter()
        .map(|(sites, a)| {
            let mut spins = vec![Spin::Down; geom.n_sites()];
            for s in sites {
                spins[s] = Spin::Up;
            }
            BasisTerm { amplitude: a / norm, spins }
        })
        .collect())
}

/// Largest summation error accepted by [`build_packet_state`].
pub const MAX_BUILD_ERROR: f64 = 1e-10;

/// Normalized TTN of bond dimension `chi` holding the product of `specs`.
/// No packets gives the vacuum.
pub fn build_packet_state(
    specs: &[WavePacketSpec],
    topo: &Arc<TreeTopology>,
    chi: usize,
    seed: u64,
) -> Result<(TtnState, SumReport)> {
    let geom = topo.geometry();
    let terms = packet_basis_terms(specs, geom)?;
    let guess = TtnState::random(topo.clone(), chi, seed);
    let (state, report) = sum_basis_states(&BasisSumProblem::new(terms, guess))?;
    if !(report.error <= MAX_BUILD_ERROR) {
        return Err(Error::InvalidSum(format!(
            "summation error {:.2e} above {MAX_BUILD_ERROR:.0e} at chi = {chi}",
            report.error
        )));
    }
    Ok((state, report))
}

/// Pad to bond dimension `chi` with `1e-12` noise, ready for TDVP.
pub fn pad_for_evolution(state: &mut TtnState, chi: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    state.pad_to(chi, 1e-12, &mut rng)?;
    state.normalize();
    Ok(())
}

/// Evolve under `H(g(t))` for `t` in `[0, tau]`. `cfg` supplies the time
/// step and Krylov settings; its times and schedule are overridden.
pub fn dress_adiabatically(
    state: &TtnState,
    params: IsingParams,
    schedule: RampSchedule,
    cfg: &EvolutionConfig,
) -> Result<TtnState> {
    let terms = build_terms(params.with_g(schedule.g_target), state.topology().geometry())?;
    let cfg = EvolutionConfig { t_start: 0.0, t_end: schedule.tau, schedule: Some(schedule), ..*cfg };
    let mut out = state.clone();
    evolve(&mut out, &terms, &cfg, |_, _| Ok(()))?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionOptions {
    pub g_target: f64,
    pub tau: f64,
    pub shape: RampShape,
    pub sigma: f64,
    pub chi: usize,
    pub seed: u64,
    pub evolution: EvolutionConfig,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self {
            g_target: 0.5,
            tau: 10.0,
            shape: RampShape::default(),
            sigma: 2.0,
            chi: 8,
            seed: 0,
            evolution: EvolutionConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    pub kx: f64,
    pub ky: f64,
    /// Dressed packet energy minus dressed vacuum energy.
    pub energy: f64,
    pub g: f64,
    pub tau: f64,
    pub chi: usize,
}

/// Excitation energy of a dressed packet at each momentum, relative to the
/// vacuum dressed with the same ramp. `params.g` is ignored.
pub fn measure_dispersion(
    topo: &Arc<TreeTopology>,
    params: IsingParams,
    k_list: &[(f64, f64)],
    opts: &DispersionOptions,
) -> Result<Vec<DispersionPoint>> {
    let geom = *topo.geometry();
    let ramp = RampSchedule::new(opts.g_target, opts.tau, opts.shape)?;
    let center = SiteCoord::new(geom.lx() as i64 / 2, geom.ly() as i64 / 2);
    let terms = build_terms(params.with_g(opts.g_target), &geom)?;
    let jobs: Vec<Option<(f64, f64)>> = std::iter::once(None).chain(k_list.iter().map(|&k| Some(k))).collect();
    let energies = jobs
        .par_iter()
        .map(|job| {
            let specs: Vec<WavePacketSpec> = job.iter().map(|&k| WavePacketSpec::new(center, k, opts.sigma)).collect();
            let (mut s, _) = build_packet_state(&specs, topo, opts.chi, opts.seed)?;
            pad_for_evolution(&mut s, opts.chi, opts.seed)?;
            let dressed = dress_adiabatically(&s, params, ramp, &opts.evolution)?;
            energy(&MeasurementContext::new(&dressed)?, &terms, opts.g_target)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(k_list
        .iter()
        .zip(&energies[1..])
        .map(|(&k, e)| DispersionPoint {
            kx: k.0,
            ky: k.1,
            energy: e - energies[0],
            g: opts.g_target,
            tau: opts.tau,
            chi: opts.chi,
        })
        .collect())
}

/// Tab-separated export with a header line.
pub fn write_dispersion<W: Write>(mut w: W, points: &[DispersionPoint]) -> Result<()> {
    writeln!(w, "# kx\tky\tenergy\tg\ttau\tchi")?;
    for p in points {
        writeln!(w, "{:.12}\t{:.12}\t{:.12}\t{}\t{}\t{}", p.kx, p.ky, p.energy, p.g, p.tau, p.chi)?;
    }
    Ok(())
}
