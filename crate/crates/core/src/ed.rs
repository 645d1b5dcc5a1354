//! Exact diagonalization reference for small lattices.
//!
//! Basis index bit `s` holds the physical index of site `s` (0 = up,
//! 1 = down), matching [`TtnState::to_dense`](crate::ttn::TtnState::to_dense).
//! The Hamiltonian is applied matrix-free; translation sectors are handled by
//! applying the projector `P_k = |G|^-1 sum_d e^{i k.d} T_d` inside the
//! Lanczos iteration.

use std::collections::HashSet;
use std::io::Write;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ising::{is_commensurate, lattice_momentum, HamiltonianTerms, IsingParams};
use crate::krylov::{evolve_adaptive, lowest_eigenpair, KrylovOptions};
use crate::lattice::{Boundary, LatticeGeometry, SiteCoord};
use crate::operators::LocalOperator;
use crate::tensor::{eigh_hermitian, vdot, C64, ONE, ZERO};

pub const MAX_ED_SITES: usize = 25;
const MAX_DENSE_SITES: usize = 12;

/// Matrix-free Ising Hamiltonian on the full `2^n` basis.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    pub params: IsingParams,
    pub geometry: LatticeGeometry,
    n: usize,
    diag: Vec<f64>,
}

pub fn build_sparse_hamiltonian(params: IsingParams, geom: &LatticeGeometry) -> Result<SparseHamiltonian> {
    params.validate()?;
    let n = geom.n_sites();
    if n > MAX_ED_SITES {
        return Err(Error::SizeOverflow { sites: n, limit: MAX_ED_SITES });
    }
    let bonds = geom.bonds();
    let diag = (0..1usize << n)
        .into_par_iter()
        .map(|i| {
            let z = |s: usize| if (i >> s) & 1 == 0 { 1.0 } else { -1.0 };
            let zz: f64 = bonds.iter().map(|&(a, b)| z(a) * z(b)).sum();
            let zs: f64 = (0..n).map(z).sum();
            -params.j * zz - params.h * zs
        })
        .collect();
    Ok(SparseHamiltonian { params, geometry: *geom, n, diag })
}

impl SparseHamiltonian {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.apply_with_g(v, self.params.g)
    }

    pub fn apply_with_g(&self, v: &[C64], g: f64) -> Vec<C64> {
        let n = self.n;
        (0..v.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = v[i] * self.diag[i];
                if g != 0.0 {
                    let mut off = ZERO;
                    for s in 0..n {
                        off += v[i ^ (1 << s)];
                    }
                    acc -= off * g;
                }
                acc
            })
            .collect()
    }

    pub fn expectation(&self, v: &[C64]) -> f64 {
        vdot(v, &self.apply(v)).re / vdot(v, v).re
    }

    /// Dense matrix, small lattices only.
    pub fn to_dense(&self) -> Result<Array2<C64>> {
        if self.n > MAX_DENSE_SITES {
            return Err(Error::SizeOverflow { sites: self.n, limit: MAX_DENSE_SITES });
        }
        let d = self.dim();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            m[[i, i]] = C64::from(self.diag[i]);
            for s in 0..self.n {
                m[[i ^ (1 << s), i]] -= C64::from(self.params.g);
            }
        }
        Ok(m)
    }
}

/// Lattice translations acting on basis indices.
struct Translations {
    shifts: Vec<(i64, i64)>,
    maps: Vec<Vec<usize>>,
}

impl Translations {
    fn new(geom: &LatticeGeometry) -> Self {
        let mut shifts = Vec::new();
        let mut maps = Vec::new();
        for dy in 0..geom.ly() as i64 {
            for dx in 0..geom.lx() as i64 {
                shifts.push((dx, dy));
                maps.push(
                    (0..geom.n_sites())
                        .map(|s| {
                            let c = geom.coord_of(s);
                            geom.site_index(SiteCoord::new(c.x + dx, c.y + dy)).expect("periodic")
                        })
                        .collect(),
                );
            }
        }
        Self { shifts, maps }
    }

    fn apply_to_index(&self, t: usize, i: usize) -> usize {
        let mut out = 0usize;
        for (s, &to) in self.maps[t].iter().enumerate() {
            out |= ((i >> s) & 1) << to;
        }
        out
    }

    fn phases(&self, k: (f64, f64)) -> Vec<C64> {
        self.shifts
            .iter()
            .map(|&(dx, dy)| C64::from_polar(1.0, k.0 * dx as f64 + k.1 * dy as f64))
            .collect()
    }

    fn project(&self, v: &[C64], phases: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; v.len()];
        let norm = 1.0 / self.shifts.len() as f64;
        for (t, ph) in phases.iter().enumerate() {
            for (i, amp) in v.iter().enumerate() {
                if *amp != ZERO {
                    out[self.apply_to_index(t, i)] += ph * amp * norm;
                }
            }
        }
        out
    }
}

/// One level of a momentum sector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRecord {
    pub energy: f64,
    pub kx: f64,
    pub ky: f64,
    /// Eigenvalue of the flip count `sum_i n_i` after rotating degenerate
    /// levels, rounded.
    pub delta_magnetization: i64,
    /// Distance of the unrounded value from the integer.
    pub magnetization_residual: f64,
}

fn random_vector(dim: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect()
}

fn flip_count(v: &[C64]) -> Vec<C64> {
    v.iter()
        .enumerate()
        .map(|(i, a)| {
            let n = v.len().trailing_zeros() as usize;
            let downs = (i as u64).count_ones() as usize;
            a * (n - downs) as f64
        })
        .collect()
}

/// Lowest eigenpair, residual `<= 1e-10`.
pub fn ground_state(params: IsingParams, geom: &LatticeGeometry) -> Result<(f64, Vec<C64>)> {
    let h = build_sparse_hamiltonian(params, geom)?;
    let (e, v, _) = lowest_eigenpair(|x| h.apply(x), |_| {}, random_vector(h.dim(), 17), 60, 1e-10, 2000)?;
    Ok((e, v))
}

/// Lowest `n_levels` eigenpairs of `h` restricted by `project`, found one at
/// a time with deflation so degenerate copies are resolved.
fn lowest_levels<P>(
    h: &SparseHamiltonian,
    project: P,
    n_levels: usize,
    seed: u64,
) -> Result<Vec<(f64, Vec<C64>)>>
where
    P: Fn(&mut Vec<C64>),
{
    let mut found: Vec<(f64, Vec<C64>)> = Vec::new();
    for lvl in 0..n_levels {
        let deflate = |w: &mut Vec<C64>| {
            project(w);
            for _ in 0..2 {
                for (_, u) in &found {
                    let c = vdot(u, w);
                    for (wi, ui) in w.iter_mut().zip(u) {
                        *wi -= c * ui;
                    }
                }
            }
        };
        match lowest_eigenpair(|x| h.apply(x), deflate, random_vector(h.dim(), seed + lvl as u64), 60, 1e-10, 2000) {
            Ok((e, v, _)) => found.push((e, v)),
            Err(Error::Sector(_)) => break,
            Err(e) => return Err(e),
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found)
}

/// Rotate clusters of (nearly) degenerate levels so that the flip count is
/// diagonal, then label each level.
fn label_levels(levels: Vec<(f64, Vec<C64>)>, k: (f64, f64)) -> Result<Vec<SpectrumRecord>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < levels.len() {
        let mut j = i + 1;
        while j < levels.len() && (levels[j].0 - levels[i].0).abs() < 1e-8 {
            j += 1;
        }
        let m = j - i;
        let mut nm = Array2::<C64>::zeros((m, m));
        let applied: Vec<Vec<C64>> = levels[i..j].iter().map(|(_, v)| flip_count(v)).collect();
        for a in 0..m {
            for b in 0..m {
                nm[[a, b]] = vdot(&levels[i + a].1, &applied[b]);
            }
        }
        let nm = (&nm + &nm.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        let (vals, _) = eigh_hermitian(&nm)?;
        for (a, val) in vals.iter().enumerate() {
            out.push(SpectrumRecord {
                energy: levels[i + a].0,
                kx: k.0,
                ky: k.1,
                delta_magnetization: val.round() as i64,
                magnetization_residual: (val - val.round()).abs(),
            });
        }
        i = j;
    }
    Ok(out)
}

fn check_sector(geom: &LatticeGeometry, k: (f64, f64)) -> Result<()> {
    if geom.boundary() != Boundary::Periodic {
        return Err(Error::Sector("momentum sectors need periodic boundaries".into()));
    }
    if !is_commensurate(geom, k) {
        return Err(Error::Sector(format!("k = ({}, {}) is not a lattice momentum", k.0, k.1)));
    }
    Ok(())
}

/// Lowest `n_levels` levels with momentum `k`.
pub fn spectrum_momentum_sector(
    params: IsingParams,
    geom: &LatticeGeometry,
    k: (f64, f64),
    n_levels: usize,
) -> Result<Vec<SpectrumRecord>> {
    check_sector(geom, k)?;
    let h = build_sparse_hamiltonian(params, geom)?;
    let tr = Translations::new(geom);
    let phases = tr.phases(k);
    let probe = tr.project(&random_vector(h.dim(), 3), &phases);
    if vdot(&probe, &probe).re < 1e-20 {
        return Err(Error::Sector("sector projection is numerically empty".into()));
    }
    let levels = lowest_levels(&h, |w| *w = tr.project(w, &phases), n_levels, 101)?;
    label_levels(levels, k)
}

/// Lowest `n_levels` levels of every momentum sector, sectors in
/// `(mx, my)` order.
pub fn spectrum_all_sectors(params: IsingParams, geom: &LatticeGeometry, n_levels: usize) -> Result<Vec<SpectrumRecord>> {
    let mut out = Vec::new();
    for mx in 0..geom.lx() as i64 {
        for my in 0..geom.ly() as i64 {
            let k = lattice_momentum(geom, (mx, my));
            out.extend(spectrum_momentum_sector(params, geom, k, n_levels)?);
        }
    }
    Ok(out)
}

/// Every eigenvalue of the sector with momentum `k`, by dense
/// diagonalization in an orthonormal momentum basis.
pub fn sector_spectrum_dense(params: IsingParams, geom: &LatticeGeometry, k: (f64, f64)) -> Result<Vec<f64>> {
    check_sector(geom, k)?;
    let h = build_sparse_hamiltonian(params, geom)?;
    if h.n_sites() > MAX_DENSE_SITES {
        return Err(Error::SizeOverflow { sites: h.n_sites(), limit: MAX_DENSE_SITES });
    }
    let tr = Translations::new(geom);
    let phases = tr.phases(k);
    let mut seen = HashSet::new();
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for r in 0..h.dim() {
        if seen.contains(&r) {
            continue;
        }
        for t in 0..tr.shifts.len() {
            seen.insert(tr.apply_to_index(t, r));
        }
        let mut e = vec![ZERO; h.dim()];
        e[r] = ONE;
        let v = tr.project(&e, &phases);
        let nrm = vdot(&v, &v).re.sqrt();
        if nrm > 1e-10 {
            basis.push(v.into_iter().map(|z| z / nrm).collect());
        }
    }
    let m = basis.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let hb: Vec<Vec<C64>> = basis.iter().map(|v| h.apply(v)).collect();
    let mut mat = Array2::<C64>::zeros((m, m));
    for a in 0..m {
        for b in 0..m {
            mat[[a, b]] = vdot(&basis[a], &hb[b]);
        }
    }
    let mat = (&mat + &mat.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
    Ok(eigh_hermitian(&mat)?.0.to_vec())
}

/// Full spectrum by dense diagonalization (small lattices).
pub fn full_spectrum_dense(params: IsingParams, geom: &LatticeGeometry) -> Result<Vec<f64>> {
    let h = build_sparse_hamiltonian(params, geom)?;
    Ok(eigh_hermitian(&h.to_dense()?)?.0.to_vec())
}

/// `exp(-i H t) state` to accuracy `tol` with adaptive substeps.
pub fn krylov_evolve(state: &[C64], h: &SparseHamiltonian, t: f64, tol: f64) -> Result<Vec<C64>> {
    evolve_adaptive(|x| h.apply(x), state, t, KrylovOptions { dim: 40, tol })
}

/// Export `energy kx ky delta_m` rows, tab separated, with a header line.
pub fn write_spectrum<W: Write>(mut w: W, records: &[SpectrumRecord]) -> Result<()> {
    writeln!(w, "# energy\tkx\tky\tdelta_m")?;
    for r in records {
        writeln!(w, "{:.12}\t{:.12}\t{:.12}\t{}", r.energy, r.kx, r.ky, r.delta_magnetization)?;
    }
    Ok(())
}

/// `<v| O |v> / <v|v>` on the dense basis.
pub fn dense_expect(v: &[C64], op: &LocalOperator) -> C64 {
    let mut w = vec![ZERO; v.len()];
    for (i, amp) in v.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        let mut terms = vec![(i, *amp)];
        for (&s, f) in op.support().iter().zip(op.factors()) {
            let mut next = Vec::with_capacity(2 * terms.len());
            for (j, a) in terms {
                let b = (j >> s) & 1;
                for out in 0..2 {
                    let m = f[[out, b]];
                    if m != ZERO {
                        next.push(((j & !(1 << s)) | (out << s), a * m));
                    }
                }
            }
            terms = next;
        }
        for (j, a) in terms {
            w[j] += a;
        }
    }
    op.coefficient() * vdot(v, &w) / vdot(v, v).re
}

/// Dense energy density with transverse field `g`.
pub fn dense_energy_density(v: &[C64], terms: &HamiltonianTerms, g: f64) -> Vec<f64> {
    let p = &terms.params;
    let mut eps = vec![0.0; terms.n_sites()];
    for &(i, j) in &terms.zz_bonds {
        let zz = dense_expect(v, &LocalOperator::zz(i, j).expect("distinct")).re;
        eps[i] -= 0.5 * p.j * zz;
        eps[j] -= 0.5 * p.j * zz;
    }
    for (i, e) in eps.iter_mut().enumerate() {
        *e -= g * dense_expect(v, &LocalOperator::x(i)).re;
        *e -= p.h * dense_expect(v, &LocalOperator::z(i)).re;
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::build_terms;
    use std::f64::consts::PI;

    fn periodic(lx: usize, ly: usize) -> LatticeGeometry {
        LatticeGeometry::rectangular(lx, ly, Boundary::Periodic).unwrap()
    }

    #[test]
    fn two_by_two_open_is_diagonal() {
        let g = LatticeGeometry::square(2, Boundary::Open).unwrap();
        let h = build_sparse_hamiltonian(IsingParams::new(1.0, 0.0, 0.0).unwrap(), &g).unwrap();
        let m = h.to_dense().unwrap();
        let off: f64 = m.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, z)| z.norm()).sum();
        assert_eq!(off, 0.0);
        let min = h.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, -4.0);
    }

    #[test]
    fn hermitian() {
        let h = build_sparse_hamiltonian(IsingParams::new(1.0, 0.7, 0.2).unwrap(), &periodic(3, 3)).unwrap();
        let m = h.to_dense().unwrap();
        let defect = (&m - &m.t().mapv(|z| z.conj())).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn classical_levels_3x3() {
        let spec = full_spectrum_dense(IsingParams::new(1.0, 0.0, 0.0).unwrap(), &periodic(3, 3)).unwrap();
        assert!((spec[0] + 18.0).abs() < 1e-12);
        assert!((spec[1] + 18.0).abs() < 1e-12);
        // 9 single flips on each of the two vacua
        let first_excited = spec.iter().filter(|&&e| (e + 10.0).abs() < 1e-9).count();
        assert_eq!(first_excited, 18);
    }

    #[test]
    fn brute_force_g0_spectrum_is_bond_counting() {
        let g = periodic(3, 3);
        let terms = build_terms(IsingParams::new(1.0, 0.0, 0.0).unwrap(), &g).unwrap();
        let mut counted: Vec<f64> = (0..512usize)
            .map(|i| {
                let z: Vec<f64> = (0..9).map(|s| if (i >> s) & 1 == 0 { 1.0 } else { -1.0 }).collect();
                let broken = terms.zz_bonds.iter().filter(|&&(a, b)| z[a] != z[b]).count();
                -18.0 + 2.0 * broken as f64
            })
            .collect();
        counted.sort_by(f64::total_cmp);
        let spec = full_spectrum_dense(terms.params, &g).unwrap();
        for (a, b) in spec.iter().zip(&counted) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_ground_state_with_field() {
        let (e, v) = ground_state(IsingParams::new(1.0, 0.0, 0.5).unwrap(), &periodic(3, 3)).unwrap();
        assert!((e - (-18.0 - 4.5)).abs() < 1e-9);
        assert!((v[0].norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn perturbative_lowering_4x3() {
        let (e, _) = ground_state(IsingParams::new(1.0, 0.5, 0.0).unwrap(), &periodic(4, 3)).unwrap();
        assert!(e < -24.0);
        // second order: each site lowers by g^2 / 8J
        assert!((e - (-24.0 - 12.0 * 0.25 / 8.0)).abs() < 0.02);
    }

    #[test]
    fn tunnelling_splitting_shrinks_with_size() {
        let p = IsingParams::new(1.0, 1.5, 0.0).unwrap();
        let gap = |g: &LatticeGeometry| {
            let r = spectrum_momentum_sector(p, g, (0.0, 0.0), 2).unwrap();
            r[1].energy - r[0].energy
        };
        let g33 = gap(&periodic(3, 3));
        let g43 = gap(&periodic(4, 3));
        assert!(g43 > 0.0 && g43 < g33, "{g43} {g33}");
    }

    #[test]
    fn sectors_merge_into_full_spectrum() {
        let p = IsingParams::new(1.0, 0.8, 0.1).unwrap();
        let g = periodic(3, 3);
        let mut merged = Vec::new();
        for mx in 0..3 {
            for my in 0..3 {
                let k = (2.0 * PI * mx as f64 / 3.0, 2.0 * PI * my as f64 / 3.0);
                merged.extend(sector_spectrum_dense(p, &g, k).unwrap());
            }
        }
        merged.sort_by(f64::total_cmp);
        let full = full_spectrum_dense(p, &g).unwrap();
        assert_eq!(merged.len(), full.len());
        for (a, b) in merged.iter().zip(&full) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn lanczos_sector_matches_dense_sector() {
        let p = IsingParams::new(1.0, 0.6, 0.05).unwrap();
        let g = periodic(3, 3);
        let k = (2.0 * PI / 3.0, 2.0 * PI / 3.0);
        let dense = sector_spectrum_dense(p, &g, k).unwrap();
        let lanczos = spectrum_momentum_sector(p, &g, k, 4).unwrap();
        for (r, e) in lanczos.iter().zip(&dense) {
            assert!((r.energy - e).abs() < 1e-8, "{} vs {e}", r.energy);
        }
    }

    #[test]
    fn magnon_band_at_g0() {
        let p = IsingParams::new(1.0, 0.0, 0.0).unwrap();
        let g = periodic(3, 3);
        let k = (2.0 * PI / 3.0, 0.0);
        let recs = spectrum_momentum_sector(p, &g, k, 2).unwrap();
        // no vacuum at k != 0; lowest are the two single-flip magnons
        for r in &recs {
            assert!((r.energy + 10.0).abs() < 1e-9);
            assert!(r.magnetization_residual < 1e-8);
        }
        let mut dm: Vec<i64> = recs.iter().map(|r| r.delta_magnetization).collect();
        dm.sort();
        assert_eq!(dm, vec![1, 8]);
    }

    #[test]
    fn incommensurate_momentum_rejected() {
        let p = IsingParams::new(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(spectrum_momentum_sector(p, &periodic(3, 3), (0.3, 0.0), 1), Err(Error::Sector(_))));
    }

    #[test]
    fn single_spin_rabi() {
        // a 2-site open chain with J tiny acts as two free spins
        let g = LatticeGeometry::rectangular(2, 1, Boundary::Open).unwrap();
        let gx = 0.7;
        let h = build_sparse_hamiltonian(IsingParams { j: 1e-300, g: gx, h: 0.0 }, &g).unwrap();
        let mut v = vec![ZERO; 4];
        v[3] = ONE; // both down
        for t in [0.3, 1.1, 2.5] {
            let w = krylov_evolve(&v, &h, t, 1e-12).unwrap();
            let z = dense_expect(&w, &LocalOperator::z(0)).re;
            assert!((z + (2.0 * gx * t).cos()).abs() < 1e-12);
            let n: f64 = w.iter().map(|a| a.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_evolution_is_phases() {
        let g = periodic(3, 3);
        let h = build_sparse_hamiltonian(IsingParams::new(1.0, 0.0, 0.3).unwrap(), &g).unwrap();
        let v = random_vector(512, 1);
        let w = krylov_evolve(&v, &h, 0.9, 1e-12).unwrap();
        for i in 0..512 {
            let want = v[i] * C64::from_polar(1.0, -h.diagonal()[i] * 0.9);
            assert!((w[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn spectrum_export_format() {
        let recs = vec![SpectrumRecord {
            energy: -10.0,
            kx: 0.0,
            ky: 1.5,
            delta_magnetization: 1,
            magnetization_residual: 0.0,
        }];
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# energy\tkx\tky\tdelta_m");
        assert_eq!(lines[1].split('\t').count(), 4);
        assert!(lines[1].ends_with("\t1"));
    }
}
