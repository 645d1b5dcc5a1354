//! The transverse-field Ising Hamiltonian
//! `H = -J sum_<ij> Z_i Z_j - g sum_i X_i - h sum_i Z_i`,
//! ramp schedules and energy diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, SiteCoord};
use crate::measure::MeasurementContext;
use crate::operators::LocalOperator;
use crate::tensor::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub j: f64,
    pub g: f64,
    pub h: f64,
}

impl IsingParams {
    pub fn new(j: f64, g: f64, h: f64) -> Result<Self> {
        let p = Self { j, g, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j > 0.0) || !self.j.is_finite() {
            return Err(Error::InvalidParams(format!("J must be positive, got {}", self.j)));
        }
        if !(self.g >= 0.0) || !(self.h >= 0.0) || !self.g.is_finite() || !self.h.is_finite() {
            return Err(Error::InvalidParams(format!(
                "g and h must be non-negative, got g={} h={}",
                self.g, self.h
            )));
        }
        Ok(())
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RampShape {
    #[default]
    Sin2sin2,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub g_target: f64,
    pub tau: f64,
    pub shape: RampShape,
}

impl RampSchedule {
    pub fn new(g_target: f64, tau: f64, shape: RampShape) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParams(format!("ramp time must be positive, got {tau}")));
        }
        Ok(Self { g_target, tau, shape })
    }
}

/// `g(t)`; clamps to the target after `tau`.
pub fn ramp_value(t: f64, schedule: &RampSchedule) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::InvalidParams(format!("ramp evaluated at t={t}")));
    }
    let x = (t / schedule.tau).min(1.0);
    Ok(match schedule.shape {
        RampShape::Sin2sin2 => {
            let inner = (0.5 * PI * x).sin().powi(2);
            schedule.g_target * (0.5 * PI * inner).sin().powi(2)
        }
        RampShape::Linear => schedule.g_target * x,
    })
}

/// Term structure of the Hamiltonian. The transverse field is kept as a
/// scalar so time-dependent runs reuse the same structure.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    pub params: IsingParams,
    pub geometry: LatticeGeometry,
    /// Unordered nearest-neighbour pairs, each once.
    pub zz_bonds: Vec<(usize, usize)>,
}

pub fn build_terms(params: IsingParams, geom: &LatticeGeometry) -> Result<HamiltonianTerms> {
    params.validate()?;
    Ok(HamiltonianTerms { params, geometry: *geom, zz_bonds: geom.bonds() })
}

impl HamiltonianTerms {
    pub fn n_sites(&self) -> usize {
        self.geometry.n_sites()
    }

    /// Number of bond plus single-site terms.
    pub fn term_count(&self) -> usize {
        self.zz_bonds.len() + 2 * self.n_sites()
    }

    /// Every term as an operator, using transverse field `g`.
    pub fn operators(&self, g: f64) -> Vec<LocalOperator> {
        let p = &self.params;
        let mut out = Vec::with_capacity(self.term_count());
        for &(i, j) in &self.zz_bonds {
            out.push(LocalOperator::zz(i, j).expect("distinct").scaled(C64::from(-p.j)));
        }
        for i in 0..self.n_sites() {
            out.push(LocalOperator::x(i).scaled(C64::from(-g)));
            out.push(LocalOperator::z(i).scaled(C64::from(-p.h)));
        }
        out
    }

    /// Neighbour site indices of `i`.
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .zz_bonds
            .iter()
            .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect();
        v.sort_unstable();
        v
    }
}

/// `<H>` with transverse field `g`.
pub fn energy(ctx: &MeasurementContext, terms: &HamiltonianTerms, g: f64) -> Result<f64> {
    Ok(energy_density(ctx, terms, g)?.iter().sum())
}

/// `eps_i = -J/2 sum_j Z_i Z_j - g X_i - h Z_i`, row-major.
pub fn energy_density(ctx: &MeasurementContext, terms: &HamiltonianTerms, g: f64) -> Result<Vec<f64>> {
    let p = &terms.params;
    let n = terms.n_sites();
    let mut bond = vec![0.0; terms.zz_bonds.len()];
    for (k, &(i, j)) in terms.zz_bonds.iter().enumerate() {
        bond[k] = ctx.expect_real(&LocalOperator::zz(i, j)?)?;
    }
    let mut eps = vec![0.0; n];
    for (k, &(i, j)) in terms.zz_bonds.iter().enumerate() {
        eps[i] -= 0.5 * p.j * bond[k];
        eps[j] -= 0.5 * p.j * bond[k];
    }
    for (i, e) in eps.iter_mut().enumerate() {
        if g != 0.0 {
            *e -= g * ctx.expect_real(&LocalOperator::x(i))?;
        }
        if p.h != 0.0 {
            *e -= p.h * ctx.expect_real(&LocalOperator::z(i))?;
        }
    }
    Ok(eps)
}

/// Second-order magnon dispersion
/// `8J - (g^2/J)(1/2 + (cos kx + cos ky)/4)`.
pub fn dispersion_second_order(k: (f64, f64), params: &IsingParams) -> Result<f64> {
    if params.j == 0.0 {
        return Err(Error::InvalidParams("dispersion needs J != 0".into()));
    }
    let (j, g) = (params.j, params.g);
    Ok(8.0 * j - g * g / j * (0.5 + 0.25 * (k.0.cos() + k.1.cos())))
}

/// `eps(k_a) - eps(k_b)` from the second-order dispersion.
pub fn bandwidth(k_a: (f64, f64), k_b: (f64, f64), params: &IsingParams) -> Result<f64> {
    Ok(dispersion_second_order(k_a, params)? - dispersion_second_order(k_b, params)?)
}

/// Gradient of the second-order dispersion, `(g^2/4J)(sin kx, sin ky)`.
pub fn group_velocity(k: (f64, f64), params: &IsingParams) -> (f64, f64) {
    let c = params.g * params.g / (4.0 * params.j);
    (c * k.0.sin(), c * k.1.sin())
}

/// Ising energy of a classical configuration (`z[i] = +-1`) at `g = 0`.
pub fn classical_energy(z: &[f64], terms: &HamiltonianTerms) -> f64 {
    let p = &terms.params;
    let bonds: f64 = terms.zz_bonds.iter().map(|&(i, j)| z[i] * z[j]).sum();
    -p.j * bonds - p.h * z.iter().sum::<f64>()
}

/// Momentum of index `(mx, my)` on an `lx x ly` lattice.
pub fn lattice_momentum(geom: &LatticeGeometry, m: (i64, i64)) -> (f64, f64) {
    (2.0 * PI * m.0 as f64 / geom.lx() as f64, 2.0 * PI * m.1 as f64 / geom.ly() as f64)
}

/// Whether `k` is a multiple of `2 pi / L` in both directions.
pub fn is_commensurate(geom: &LatticeGeometry, k: (f64, f64)) -> bool {
    let check = |k: f64, l: usize| {
        let m = k * l as f64 / (2.0 * PI);
        (m - m.round()).abs() < 1e-9
    };
    check(k.0, geom.lx()) && check(k.1, geom.ly())
}

/// `k . r` for a lattice position.
pub fn phase(k: (f64, f64), r: SiteCoord) -> f64 {
    k.0 * r.x as f64 + k.1 * r.y as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tree_topology, Boundary};
    use crate::ttn::{Spin, TtnState};
    use std::sync::Arc;

    fn geom3() -> LatticeGeometry {
        LatticeGeometry::square(3, Boundary::Periodic).unwrap()
    }

    fn product_energy(spins: &[Spin], params: IsingParams) -> (f64, Vec<f64>) {
        let g = geom3();
        let topo = Arc::new(build_tree_topology(&g).unwrap());
        let s = TtnState::product(topo, spins).unwrap();
        let terms = build_terms(params, &g).unwrap();
        let ctx = MeasurementContext::new(&s).unwrap();
        let eps = energy_density(&ctx, &terms, params.g).unwrap();
        (energy(&ctx, &terms, params.g).unwrap(), eps)
    }

    #[test]
    fn term_counts() {
        let t = build_terms(IsingParams::new(1.0, 0.5, 0.1).unwrap(), &geom3()).unwrap();
        assert_eq!(t.zz_bonds.len(), 18);
        assert_eq!(t.term_count(), 18 + 9 + 9);
        assert_eq!(t.operators(0.5).len(), 36);
    }

    #[test]
    fn classical_energies() {
        let p = IsingParams::new(1.0, 0.0, 0.0).unwrap();
        let down = vec![Spin::Down; 9];
        let (e, eps) = product_energy(&down, p);
        assert!((e + 18.0).abs() < 1e-12);
        assert!(eps.iter().all(|x| (x + 2.0).abs() < 1e-12));
        let mut one = down.clone();
        one[4] = Spin::Up;
        let (e1, eps1) = product_energy(&one, p);
        assert!((e1 + 10.0).abs() < 1e-12);
        let nb = [1, 3, 5, 7];
        for (i, x) in eps1.iter().enumerate() {
            let want = if i == 4 {
                2.0
            } else if nb.contains(&i) {
                -1.0
            } else {
                -2.0
            };
            assert!((x - want).abs() < 1e-12, "site {i}: {x}");
        }
        let zee = IsingParams { j: 1e-300, g: 0.0, h: 1.0 };
        let (e2, _) = product_energy(&[Spin::Up; 9], zee);
        assert!((e2 + 9.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_endpoints_and_midpoint() {
        let s = RampSchedule::new(1.3, 10.0, RampShape::Sin2sin2).unwrap();
        assert_eq!(ramp_value(0.0, &s).unwrap(), 0.0);
        assert!((ramp_value(10.0, &s).unwrap() - 1.3).abs() < 1e-15);
        assert!((ramp_value(5.0, &s).unwrap() - 0.65).abs() < 1e-14);
        assert!((ramp_value(50.0, &s).unwrap() - 1.3).abs() < 1e-15);
        assert!(ramp_value(-0.1, &s).is_err());
        let lin = RampSchedule::new(2.0, 4.0, RampShape::Linear).unwrap();
        assert!((ramp_value(1.0, &lin).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ramp_is_flat_at_edges() {
        let s = RampSchedule::new(1.0, 10.0, RampShape::Sin2sin2).unwrap();
        let h = 1e-4;
        let d0 = ramp_value(h, &s).unwrap() / h;
        let d1 = (ramp_value(10.0, &s).unwrap() - ramp_value(10.0 - h, &s).unwrap()) / h;
        assert!(d0.abs() < 1e-6 && d1.abs() < 1e-6);
    }

    #[test]
    fn dispersion_examples() {
        let p = IsingParams::new(1.0, 1.0, 0.0).unwrap();
        assert!((dispersion_second_order((PI, PI), &p).unwrap() - 8.0).abs() < 1e-14);
        assert!((dispersion_second_order((0.0, 0.0), &p).unwrap() - 7.0).abs() < 1e-14);
        let half = IsingParams::new(1.0, 0.5, 0.0).unwrap();
        let bw = bandwidth((PI / 2.0, PI / 2.0), (0.0, 0.0), &half).unwrap();
        assert!((bw - 0.125).abs() < 1e-14);
        let v = group_velocity((PI / 2.0, PI / 2.0), &p);
        assert!((v.0 - 0.25).abs() < 1e-15 && (v.1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn commensurability() {
        let g = LatticeGeometry::square(12, Boundary::Periodic).unwrap();
        assert!(is_commensurate(&g, (PI / 2.0, -PI / 2.0)));
        assert!(!is_commensurate(&g, (0.1, 0.0)));
    }
}
