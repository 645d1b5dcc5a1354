//! Measured quantities: composite-particle correlators, long-range
//! connected correlators, magnetization and bubble radius, plus the
//! newline-delimited JSON time-series format.
//!
//! Record schema, version 1: one JSON object per line,
//! `{"v":1,"t":<time>,"name":<string>,"value":<real>}` for scalars or
//! `{"v":1,"t":<time>,"name":<string>,"field":[<real>; sites]}` for per-site
//! fields in row-major site order (`x + lx * y`).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, SiteCoord};
use crate::measure::MeasurementContext;
use crate::operators::{hole, number, LocalOperator};
use crate::tensor::C64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositeCorrelators {
    pub c3h: f64,
    pub c3k: f64,
    pub c4: f64,
}

/// A factor `n` (occupied) or `1 - n` (guard) at an offset.
#[derive(Clone, Copy)]
enum Slot {
    N(i64, i64),
    Guard(i64, i64),
}

/// One operator per anchor site for the given pattern. Out-of-range guards
/// on open lattices are dropped; anchors whose `n` factors leave the lattice
/// are skipped.
fn pattern_operators(geom: &LatticeGeometry, pattern: &[Slot], coefficient: f64) -> Vec<LocalOperator> {
    let mut ops = Vec::new();
    'anchor: for s in 0..geom.n_sites() {
        let c = geom.coord_of(s);
        let mut pairs = Vec::new();
        for slot in pattern {
            let (dx, dy, m, required) = match *slot {
                Slot::N(dx, dy) => (dx, dy, number(), true),
                Slot::Guard(dx, dy) => (dx, dy, hole(), false),
            };
            match geom.site_index(SiteCoord::new(c.x + dx, c.y + dy)) {
                Ok(site) => pairs.push((site, m)),
                Err(_) if !required => {}
                Err(_) => continue 'anchor,
            }
        }
        ops.push(LocalOperator::from_factors(pairs, C64::from(coefficient)).expect("non-empty support"));
    }
    ops
}

fn line_pattern(horizontal: bool) -> Vec<Slot> {
    let at = |k: i64| if horizontal { (k, 0) } else { (0, k) };
    let (a, b, c, d, e) = (at(-2), at(-1), at(0), at(1), at(2));
    vec![Slot::Guard(a.0, a.1), Slot::N(b.0, b.1), Slot::N(c.0, c.1), Slot::N(d.0, d.1), Slot::Guard(e.0, e.1)]
}

/// Operators whose expectation values sum to `(C3h, C3k, C4)`, with the
/// degeneracy prefactors included.
pub fn composite_operators(geom: &LatticeGeometry) -> [Vec<LocalOperator>; 3] {
    let kink = [Slot::N(0, 0), Slot::N(1, 0), Slot::N(0, 1), Slot::Guard(1, 1)];
    let square = [Slot::N(0, 0), Slot::N(1, 0), Slot::N(0, 1), Slot::N(1, 1)];
    [
        pattern_operators(geom, &line_pattern(true), 2.0),
        pattern_operators(geom, &kink, 4.0),
        pattern_operators(geom, &square, 1.0),
    ]
}

fn sum_expect(ctx: &MeasurementContext, ops: &[LocalOperator]) -> Result<f64> {
    ops.iter().map(|o| ctx.expect_real(o)).sum()
}

/// Three-spin horizontal, three-spin kink and four-spin square signals.
pub fn composite_correlators(ctx: &MeasurementContext) -> Result<CompositeCorrelators> {
    let geom = ctx.state().topology().geometry();
    let [h, k, s] = composite_operators(geom);
    Ok(CompositeCorrelators { c3h: sum_expect(ctx, &h)?, c3k: sum_expect(ctx, &k)?, c4: sum_expect(ctx, &s)? })
}

/// Vertical counterpart of `C3h` (same prefactor).
pub fn vertical_chain_correlator(ctx: &MeasurementContext) -> Result<f64> {
    let geom = ctx.state().topology().geometry();
    sum_expect(ctx, &pattern_operators(geom, &line_pattern(false), 2.0))
}

/// Probe points for the long-range correlators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSuite {
    /// Scattering axis pair `(p, p)`, `(q, q)`.
    pub axis: [SiteCoord; 2],
    /// Orthogonal pair `(p, q)`, `(q, p)`.
    pub orthogonal: [SiteCoord; 2],
    pub center: SiteCoord,
    /// Correlator values subtracted by [`CorrelatorSuite::relative`].
    pub baseline: Option<LongRangeCorrelators>,
}

impl CorrelatorSuite {
    /// `p = round(7L/24)`, `q = round(18L/24)`, `m = round(L/2)` per axis.
    pub fn for_geometry(geom: &LatticeGeometry) -> Result<Self> {
        let f = |num: f64, l: usize| (num * l as f64 / 24.0).round() as i64;
        let (px, py) = (f(7.0, geom.lx()), f(7.0, geom.ly()));
        let (qx, qy) = (f(18.0, geom.lx()), f(18.0, geom.ly()));
        let (mx, my) = ((geom.lx() as f64 / 2.0).round() as i64, (geom.ly() as f64 / 2.0).round() as i64);
        Self::with_probes(geom, (px, py), (qx, qy), (mx, my))
    }

    pub fn with_probes(geom: &LatticeGeometry, p: (i64, i64), q: (i64, i64), m: (i64, i64)) -> Result<Self> {
        if !(p.0 < q.0 && p.1 < q.1) {
            return Err(Error::InvalidParams(format!("probe points need p < q, got {p:?} and {q:?}")));
        }
        let c = |x, y| geom.wrap(SiteCoord::new(x, y));
        Ok(Self {
            axis: [c(p.0, p.1)?, c(q.0, q.1)?],
            orthogonal: [c(p.0, q.1)?, c(q.0, p.1)?],
            center: c(m.0, m.1)?,
            baseline: None,
        })
    }

    pub fn relative(&self, v: LongRangeCorrelators) -> LongRangeCorrelators {
        match self.baseline {
            Some(b) => LongRangeCorrelators {
                c_a: v.c_a - b.c_a,
                c_o: v.c_o - b.c_o,
                c_ao: v.c_ao - b.c_ao,
                c_a3: v.c_a3 - b.c_a3,
                c_o3: v.c_o3 - b.c_o3,
            },
            None => v,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LongRangeCorrelators {
    pub c_a: f64,
    pub c_o: f64,
    pub c_ao: f64,
    pub c_a3: f64,
    pub c_o3: f64,
}

/// Connected two-point and product-subtracted three-point correlators of
/// the flip number at the probe points.
pub fn long_range_correlators(ctx: &MeasurementContext, suite: &CorrelatorSuite) -> Result<LongRangeCorrelators> {
    let geom = ctx.state().topology().geometry();
    let idx = |c: SiteCoord| geom.site_index(c);
    let (a, b) = (idx(suite.axis[0])?, idx(suite.axis[1])?);
    let (o1, o2) = (idx(suite.orthogonal[0])?, idx(suite.orthogonal[1])?);
    let m = idx(suite.center)?;
    let n = |s: usize| ctx.expect_real(&LocalOperator::n(s));
    let nn = |sites: &[usize]| ctx.expect_real(&LocalOperator::n_product(sites));
    let (na, nb, no1, no2, nm) = (n(a)?, n(b)?, n(o1)?, n(o2)?, n(m)?);
    Ok(LongRangeCorrelators {
        c_a: nn(&[a, b])? - na * nb,
        c_o: nn(&[o1, o2])? - no1 * no2,
        c_ao: nn(&[a, o1])? - na * no1,
        c_a3: nn(&[a, m, b])? - na * nm * nb,
        c_o3: nn(&[o2, m, o1])? - no2 * nm * no1,
    })
}

fn check_lengths(z: &[f64], reference: &[f64]) -> Result<()> {
    if z.len() != reference.len() || z.is_empty() {
        return Err(Error::InvalidParams(format!(
            "field of {} sites against reference of {}",
            z.len(),
            reference.len()
        )));
    }
    Ok(())
}

/// `(sum <Z> - sum Z_ref) / sites`.
pub fn magnetization_change(z: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(z, reference)?;
    let d: f64 = z.iter().zip(reference).map(|(a, b)| a - b).sum();
    Ok(d / z.len() as f64)
}

/// Radius of a disk with as many flipped sites as `sum (Z - Z_ref) / 2`.
pub fn bubble_radius(z: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(z, reference)?;
    let flips: f64 = z.iter().zip(reference).map(|(a, b)| (a - b) / 2.0).sum();
    Ok((flips.max(0.0) / std::f64::consts::PI).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordData {
    Value(f64),
    Field(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub v: u32,
    pub t: f64,
    pub name: String,
    #[serde(flatten)]
    pub data: RecordData,
}

impl TimeSeriesRecord {
    pub fn scalar(t: f64, name: &str, value: f64) -> Self {
        Self { v: SCHEMA_VERSION, t, name: name.to_string(), data: RecordData::Value(value) }
    }

    pub fn field(t: f64, name: &str, values: Vec<f64>) -> Self {
        Self { v: SCHEMA_VERSION, t, name: name.to_string(), data: RecordData::Field(values) }
    }

    pub fn value(&self) -> Option<f64> {
        match self.data {
            RecordData::Value(v) => Some(v),
            RecordData::Field(_) => None,
        }
    }
}

/// Appends one record per line and flushes after each batch.
pub struct NdjsonWriter<W: Write> {
    out: W,
}

impl<W: Write> NdjsonWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, rec: &TimeSeriesRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec).map_err(|e| Error::Format(e.to_string()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_all(&mut self, recs: &[TimeSeriesRecord]) -> Result<()> {
        for r in recs {
            self.write(r)?;
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn get_mut(&mut self) -> &mut W {
        &mut self.out
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parse a series. A final line without a newline (an interrupted write) is
/// ignored; any other malformed line or schema mismatch is an error.
pub fn read_series<R: BufRead>(mut r: R) -> Result<Vec<TimeSeriesRecord>> {
    let mut out = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        if !line.ends_with('\n') {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let rec: TimeSeriesRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
        if rec.v != SCHEMA_VERSION {
            return Err(Error::Format(format!("line {lineno}: schema version {} != {SCHEMA_VERSION}", rec.v)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Subtract, per observable name, the record nearest to `baseline_time`.
/// Every name needs a record within `tolerance` of that time.
pub fn baseline_subtract(series: &[TimeSeriesRecord], baseline_time: f64, tolerance: f64) -> Result<Vec<TimeSeriesRecord>> {
    let mut base: BTreeMap<&str, &TimeSeriesRecord> = BTreeMap::new();
    for r in series {
        let d = (r.t - baseline_time).abs();
        let e = base.entry(&r.name).or_insert(r);
        if d < (e.t - baseline_time).abs() {
            *e = r;
        }
    }
    for r in base.values() {
        if (r.t - baseline_time).abs() > tolerance {
            return Err(Error::NoBaseline { time: baseline_time, tolerance });
        }
    }
    series
        .iter()
        .map(|r| {
            let b = base[r.name.as_str()];
            let data = match (&r.data, &b.data) {
                (RecordData::Value(v), RecordData::Value(w)) => RecordData::Value(v - w),
                (RecordData::Field(v), RecordData::Field(w)) if v.len() == w.len() => {
                    RecordData::Field(v.iter().zip(w).map(|(a, b)| a - b).collect())
                }
                _ => return Err(Error::Format(format!("observable {} changes shape", r.name))),
            };
            Ok(TimeSeriesRecord { v: r.v, t: r.t, name: r.name.clone(), data })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::dense_expect;
    use crate::lattice::Boundary;
    use crate::lattice::build_tree_topology;
    use crate::tensor::ZERO;
    use crate::ttn::{Spin, TtnState};
    use std::sync::Arc;

    fn product(geom: LatticeGeometry, up: &[(i64, i64)]) -> TtnState {
        let topo = Arc::new(build_tree_topology(&geom).unwrap());
        let mut spins = vec![Spin::Down; geom.n_sites()];
        for &(x, y) in up {
            spins[geom.site_index(SiteCoord::new(x, y)).unwrap()] = Spin::Up;
        }
        TtnState::product(topo, &spins).unwrap()
    }

    fn composite(s: &TtnState) -> (f64, f64, f64) {
        let c = composite_correlators(&MeasurementContext::new(s).unwrap()).unwrap();
        (c.c3h, c.c3k, c.c4)
    }

    fn close(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12
    }

    #[test]
    fn product_state_suite() {
        for b in [Boundary::Periodic, Boundary::Open] {
            let g = LatticeGeometry::square(6, b).unwrap();
            assert!(close(composite(&product(g, &[])), (0.0, 0.0, 0.0)));
            assert!(close(composite(&product(g, &[(2, 2), (3, 2), (2, 3), (3, 3)])), (0.0, 0.0, 1.0)));
            assert!(close(composite(&product(g, &[(2, 2), (3, 2), (2, 3)])), (0.0, 4.0, 0.0)));
            assert!(close(composite(&product(g, &[(1, 2), (2, 2), (3, 2)])), (2.0, 0.0, 0.0)));
        }
    }

    #[test]
    fn patterns_across_the_seam() {
        let g = LatticeGeometry::square(6, Boundary::Periodic).unwrap();
        assert!(close(composite(&product(g, &[(5, 5), (0, 5), (5, 0), (0, 0)])), (0.0, 0.0, 1.0)));
        assert!(close(composite(&product(g, &[(5, 1), (0, 1), (1, 1)])), (2.0, 0.0, 0.0)));
        // open lattice: chain against the edge keeps its missing guard
        let o = LatticeGeometry::square(6, Boundary::Open).unwrap();
        assert!(close(composite(&product(o, &[(0, 1), (1, 1), (2, 1)])), (2.0, 0.0, 0.0)));
    }

    #[test]
    fn longer_chain_is_not_a_trimer() {
        let g = LatticeGeometry::square(8, Boundary::Periodic).unwrap();
        assert!(close(composite(&product(g, &[(1, 2), (2, 2), (3, 2), (4, 2)])), (0.0, 0.0, 0.0)));
    }

    #[test]
    fn rotation_swaps_chain_orientation() {
        let g = LatticeGeometry::square(6, Boundary::Periodic).unwrap();
        let h = product(g, &[(1, 2), (2, 2), (3, 2)]);
        let v = product(g, &[(2, 1), (2, 2), (2, 3)]);
        let ch = MeasurementContext::new(&h).unwrap();
        let cv = MeasurementContext::new(&v).unwrap();
        assert!((composite_correlators(&ch).unwrap().c3h - vertical_chain_correlator(&cv).unwrap()).abs() < 1e-14);
        assert!(vertical_chain_correlator(&ch).unwrap().abs() < 1e-14);
    }

    #[test]
    fn dense_oracle_agreement() {
        for (lx, ly) in [(3, 3), (3, 4)] {
            let g = LatticeGeometry::rectangular(lx, ly, Boundary::Periodic).unwrap();
            let topo = Arc::new(build_tree_topology(&g).unwrap());
            let s = TtnState::random(topo, 64, 11);
            let v = s.to_dense().unwrap();
            let ctx = MeasurementContext::new(&s).unwrap();
            let c = composite_correlators(&ctx).unwrap();
            let ops = composite_operators(&g);
            let dense: Vec<f64> =
                ops.iter().map(|l| l.iter().map(|o| dense_expect(&v, o).re).sum()).collect();
            assert!((c.c3h - dense[0]).abs() < 1e-10);
            assert!((c.c3k - dense[1]).abs() < 1e-10);
            assert!((c.c4 - dense[2]).abs() < 1e-10);
        }
    }

    #[test]
    fn bell_pair_on_axis() {
        let g = LatticeGeometry::square(4, Boundary::Periodic).unwrap();
        let suite = CorrelatorSuite::for_geometry(&g).unwrap();
        let (a, b) = (g.site_index(suite.axis[0]).unwrap(), g.site_index(suite.axis[1]).unwrap());
        let all_down = (1usize << 16) - 1;
        let mut v = vec![ZERO; 1 << 16];
        v[all_down & !(1 << a)] = C64::from(0.5f64.sqrt());
        v[all_down & !(1 << b)] = C64::from(0.5f64.sqrt());
        let topo = Arc::new(build_tree_topology(&g).unwrap());
        let s = TtnState::from_dense(topo, &v).unwrap();
        let lr = long_range_correlators(&MeasurementContext::new(&s).unwrap(), &suite).unwrap();
        assert!((lr.c_a + 0.25).abs() < 1e-12);
        assert!(lr.c_o.abs() < 1e-12);
    }

    #[test]
    fn product_states_have_no_connected_part() {
        let g = LatticeGeometry::square(12, Boundary::Periodic).unwrap();
        let suite = CorrelatorSuite::for_geometry(&g).unwrap();
        assert_eq!(suite.axis, [SiteCoord::new(4, 4), SiteCoord::new(9, 9)]);
        assert_eq!(suite.center, SiteCoord::new(6, 6));
        let s = product(g, &[(4, 4), (6, 6), (4, 9)]);
        let lr = long_range_correlators(&MeasurementContext::new(&s).unwrap(), &suite).unwrap();
        for x in [lr.c_a, lr.c_o, lr.c_ao, lr.c_a3, lr.c_o3] {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn default_probes_on_24() {
        let g = LatticeGeometry::square(24, Boundary::Periodic).unwrap();
        let s = CorrelatorSuite::for_geometry(&g).unwrap();
        assert_eq!(s.axis, [SiteCoord::new(7, 7), SiteCoord::new(18, 18)]);
        assert_eq!(s.orthogonal, [SiteCoord::new(7, 18), SiteCoord::new(18, 7)]);
        assert_eq!(s.center, SiteCoord::new(12, 12));
    }

    #[test]
    fn magnetization_and_radius() {
        let reference = vec![-1.0; 576];
        assert_eq!(magnetization_change(&reference, &reference).unwrap(), 0.0);
        let mut one = reference.clone();
        one[3] = 1.0;
        assert!((magnetization_change(&one, &reference).unwrap() - 2.0 / 576.0).abs() < 1e-15);
        assert!((magnetization_change(&vec![1.0; 576], &reference).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(bubble_radius(&reference, &reference).unwrap(), 0.0);
        let mut block = reference.clone();
        for s in [0, 1, 24, 25] {
            block[s] = 1.0;
        }
        assert!((bubble_radius(&block, &reference).unwrap() - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-12);
        assert!(magnetization_change(&block[..10], &reference).is_err());
    }

    #[test]
    fn ndjson_round_trip_and_truncation() {
        let recs = vec![
            TimeSeriesRecord::scalar(0.2, "c_A", -0.125),
            TimeSeriesRecord::field(0.2, "energy_density", vec![1.0, -2.5, 0.1]),
        ];
        let mut w = NdjsonWriter::new(Vec::new());
        w.write_all(&recs).unwrap();
        let mut bytes = w.into_inner();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(r#"{"v":1,"t":0.2,"name":"c_A","value":-0.125}"#));
        bytes.extend_from_slice(br#"{"v":1,"t":0.4,"na"#);
        let back = read_series(&bytes[..]).unwrap();
        assert_eq!(back, recs);
        assert!(read_series(&b"{\"v\":2,\"t\":0,\"name\":\"x\",\"value\":1}\n"[..]).is_err());
    }

    #[test]
    fn baseline() {
        let series: Vec<_> = (0..5).map(|k| TimeSeriesRecord::scalar(k as f64, "c", 3.0)).collect();
        let out = baseline_subtract(&series, 2.0, 0.1).unwrap();
        assert!(out.iter().all(|r| r.value() == Some(0.0)));
        assert!(matches!(baseline_subtract(&series, -1.0, 0.1), Err(Error::NoBaseline { .. })));
        let near = baseline_subtract(&series, 2.04, 0.1).unwrap();
        assert_eq!(near.len(), 5);
    }
}
