use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use ttn_scatter::ising::{ramp_value, RampSchedule, RampShape};
use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry, SiteCoord};
use ttn_scatter::observables::{bubble_radius, magnetization_change};
use ttn_scatter::runner::{window_slope, ExperimentConfig};
use ttn_scatter::snapshot::{read_snapshot, write_snapshot, SnapshotMeta};
use ttn_scatter::ttn::{overlap, TtnState};
use ttn_scatter::wavepacket::{packet_terms, WavePacketSpec};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Periodic), Just(Boundary::Open)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn site_index_is_a_bijection(lx in 3usize..9, ly in 3usize..9, b in boundary()) {
        let g = LatticeGeometry::rectangular(lx, ly, b).unwrap();
        let mut seen = vec![false; g.n_sites()];
        for x in 0..lx as i64 {
            for y in 0..ly as i64 {
                let i = g.site_index(SiteCoord::new(x, y)).unwrap();
                prop_assert!(!seen[i]);
                seen[i] = true;
                prop_assert_eq!(g.coord_of(i), SiteCoord::new(x, y));
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn periodic_wrap_is_consistent(lx in 3usize..9, ly in 3usize..9, x in -30i64..30, y in -30i64..30) {
        let g = LatticeGeometry::rectangular(lx, ly, Boundary::Periodic).unwrap();
        let a = g.site_index(SiteCoord::new(x, y)).unwrap();
        let b = g.site_index(SiteCoord::new(x + lx as i64, y - 2 * ly as i64)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn packets_are_normalized(cx in 0i64..12, cy in 0i64..12, mx in -6i64..6, my in -6i64..6, sigma in 0.3f64..4.0) {
        let g = LatticeGeometry::square(12, Boundary::Periodic).unwrap();
        let k = (2.0 * PI * mx as f64 / 12.0, 2.0 * PI * my as f64 / 12.0);
        let terms = packet_terms(&WavePacketSpec::new(SiteCoord::new(cx, cy), k, sigma), &g).unwrap();
        let w: f64 = terms.iter().map(|(a, _)| a.norm_sqr()).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshots_round_trip(lx in 3usize..6, ly in 3usize..6, b in boundary(), chi in 1usize..6, seed in 0u64..=i64::MAX as u64, t in -1e3f64..1e3) {
        let g = LatticeGeometry::rectangular(lx, ly, b).unwrap();
        let s = TtnState::random(Arc::new(build_tree_topology(&g).unwrap()), chi, seed);
        let meta = SnapshotMeta { j: 1.0, g: 0.5, h: 0.1, t, dt: 0.02, chi: chi as u64, seed };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s, &meta).unwrap();
        let (back, m) = read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(m, meta);
        let mut again = Vec::new();
        write_snapshot(&mut again, &back, &m).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn overlap_is_hermitian_and_gauge_invariant(lx in 3usize..5, ly in 3usize..5, chi in 1usize..5, seed in 0u64..1000, node in 0usize..64) {
        let g = LatticeGeometry::rectangular(lx, ly, Boundary::Periodic).unwrap();
        let topo = Arc::new(build_tree_topology(&g).unwrap());
        let a = TtnState::random(topo.clone(), chi, seed);
        let mut b = TtnState::random(topo.clone(), chi, seed + 1);
        let ab = overlap(&a, &b).unwrap();
        prop_assert!((ab - overlap(&b, &a).unwrap().conj()).norm() < 1e-12 * (1.0 + ab.norm()));
        b.canonicalize(node % topo.n_nodes()).unwrap();
        prop_assert!((overlap(&a, &b).unwrap() - ab).norm() < 1e-10 * (1.0 + ab.norm()));
    }

    #[test]
    fn bubble_radius_grows_with_flips(n in 1usize..60, flips in 0usize..60, extra in 1usize..10) {
        let reference = vec![-1.0; n + 70];
        let field = |f: usize| {
            let mut z = reference.clone();
            z.iter_mut().take(f).for_each(|v| *v = 1.0);
            z
        };
        let (a, b) = (field(flips), field(flips + extra));
        prop_assert!(bubble_radius(&b, &reference).unwrap() > bubble_radius(&a, &reference).unwrap());
        let dm = magnetization_change(&a, &reference).unwrap();
        prop_assert!((dm - 2.0 * flips as f64 / reference.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn ramp_is_monotone_and_bounded(g in 0.0f64..3.0, tau in 0.1f64..20.0, t in 0.0f64..25.0, dt in 0.0f64..1.0) {
        for shape in [RampShape::Sin2sin2, RampShape::Linear] {
            let r = RampSchedule::new(g, tau, shape).unwrap();
            let (a, b) = (ramp_value(t, &r).unwrap(), ramp_value(t + dt, &r).unwrap());
            prop_assert!(a >= 0.0 && a <= g + 1e-15);
            prop_assert!(b >= a - 1e-15);
        }
    }

    #[test]
    fn slope_of_a_line(a in -1.0f64..1.0, c in -5.0f64..5.0, n in 3usize..40) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 0.3, a * i as f64 * 0.3 + c)).collect();
        prop_assert!((window_slope(&pts, 0.0, 1e9).unwrap() - a).abs() < 1e-9);
    }

    #[test]
    fn config_text_round_trips(g in 0.0f64..3.0, h in 0.0f64..1.0, chi in 1usize..64, seed in 0u64..=i64::MAX as u64) {
        let overrides = vec![
            format!("model.g={g:?}"),
            format!("model.h={h:?}"),
            format!("evolution.chi={chi}"),
            format!("evolution.seed={seed}"),
        ];
        let c = ExperimentConfig::from_toml_with_overrides("[geometry]\nlx = 12\n", &overrides).unwrap();
        prop_assert_eq!(c.model.g, g);
        prop_assert_eq!(c.evolution.seed, seed);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }
}
