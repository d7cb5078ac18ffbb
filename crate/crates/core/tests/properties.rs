use emitterlab::correlator::{brute_force_correlate, correlate_with, pair_counts, BinGrid, Execution};
use emitterlab::photophysics::{
    g2_multi_exponential, g2_rate_equation, populations, steady_state, FourLevelRates, LevelSystem, Propagator,
};
use emitterlab::spectral::{convert_axis, debye_waller, dw_from_curve, Profile, SpectralFitModel};
use emitterlab::ttio::{
    read_spectrum, read_timetags, write_spectrum, write_timetags, AxisUnit, DefectLineList, DwPolicy, Mode,
    PhotonRecord, PhotonStream, ReadOptions, SpectrumData, SpectrumPoint, TimetagFormat,
};
use proptest::prelude::*;

fn stream_strategy() -> impl Strategy<Value = PhotonStream> {
    (1_000u64..200_000).prop_flat_map(|span| {
        prop::collection::vec((0u8..2, 0..=span), 0..400).prop_map(move |v| {
            let records = v.into_iter().map(|(c, t)| PhotonRecord::new(c, t)).collect();
            PhotonStream::from_records(records, 1, &[0, 1], Some(span)).unwrap()
        })
    })
}

fn grid_for(span: u64, reach_frac: f64, width_frac: f64) -> BinGrid {
    let reach = ((span as f64 * reach_frac) as i64).max(2);
    let width = ((reach as f64 * width_frac) as i64).max(1);
    BinGrid::linear(-reach, reach, width).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sweep_matches_enumeration(s in stream_strategy(), r in 0.01f64..0.5, w in 0.001f64..0.5, chunks in 1usize..9) {
        let grid = grid_for(s.duration(), r, w);
        let oracle = brute_force_correlate(&s, 0, 1, &grid).unwrap();
        let fast = correlate_with(&s, 0, 1, &grid, Execution::Chunked { chunks }).unwrap();
        prop_assert_eq!(oracle.counts, fast.counts);
    }

    #[test]
    fn time_shift_leaves_counts_unchanged(s in stream_strategy(), offset in 0u64..1_000_000_000, r in 0.01f64..0.5) {
        let grid = grid_for(s.duration(), r, 0.05);
        let a = correlate_with(&s, 0, 1, &grid, Execution::Sequential).unwrap();
        let b = correlate_with(&s.shifted(offset).unwrap(), 0, 1, &grid, Execution::Sequential).unwrap();
        prop_assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn swapping_channels_mirrors_lags(s in stream_strategy(), r in 0.01f64..0.5, w in 0.01f64..0.5) {
        let grid = grid_for(s.duration(), r, w);
        // b - a in [lo, hi) is a - b in [-hi + 1, -lo + 1) on integer ticks.
        let mirrored: Vec<i64> = grid.edges().iter().rev().map(|e| 1 - e).collect();
        let mgrid = BinGrid::from_edges(mirrored, grid.kind()).unwrap();
        let ab = correlate_with(&s, 0, 1, &grid, Execution::Sequential).unwrap();
        let ba = correlate_with(&s, 1, 0, &mgrid, Execution::Sequential).unwrap();
        let mut rev = ba.counts.clone();
        rev.reverse();
        prop_assert_eq!(ab.counts, rev);
    }

    #[test]
    fn bin_counts_sum_to_pairs_in_window(a in prop::collection::vec(0i64..10_000, 0..200),
                                         b in prop::collection::vec(0i64..10_000, 0..200),
                                         lo in -5_000i64..0, hi in 1i64..5_000) {
        let (mut a, mut b) = (a, b);
        a.sort_unstable();
        b.sort_unstable();
        let edges = vec![lo, 0, hi];
        let counts = pair_counts(&a, &b, &edges, Execution::Sequential);
        let expect = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|d| (lo..hi).contains(d)).count() as u64;
        prop_assert_eq!(counts.iter().sum::<u64>(), expect);
    }

    #[test]
    fn binary_and_text_round_trip(s in stream_strategy()) {
        for format in [TimetagFormat::Text, TimetagFormat::Binary] {
            let mut buf = Vec::new();
            write_timetags(&s, &mut buf, format).unwrap();
            // The binary layout has no duration field; the reader takes it
            // from the caller.
            let opts = match format {
                TimetagFormat::Text => ReadOptions::default(),
                TimetagFormat::Binary => ReadOptions { duration: Some(s.duration()), ..ReadOptions::default() },
            };
            let back = read_timetags(buf.as_slice(), format, &opts).unwrap();
            prop_assert_eq!(back.records(), s.records());
            prop_assert_eq!(back.duration(), s.duration());
        }
    }

    #[test]
    fn axis_conversion_is_an_involution(xs in prop::collection::btree_set(200u32..1200u32, 2..50)) {
        let points: Vec<SpectrumPoint> =
            xs.iter().map(|&x| SpectrumPoint { x: x as f64 + 0.25, counts: x as f64, sigma: None }).collect();
        let nm = SpectrumData::new(AxisUnit::Nanometers, points).unwrap();
        let back = convert_axis(&convert_axis(&nm, AxisUnit::ElectronVolts).unwrap(), AxisUnit::Nanometers).unwrap();
        for (p, q) in nm.points().iter().zip(back.points()) {
            prop_assert!((p.x - q.x).abs() <= p.x * f64::EPSILON);
            prop_assert_eq!(p.counts, q.counts);
        }
    }

    #[test]
    fn spectrum_text_round_trip(ys in prop::collection::vec(0.0f64..1e6, 2..40)) {
        let points: Vec<SpectrumPoint> =
            ys.iter().enumerate().map(|(i, &y)| SpectrumPoint { x: 1.5 + i as f64 * 0.01, counts: y, sigma: None }).collect();
        let s = SpectrumData::new(AxisUnit::ElectronVolts, points).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&s, &mut buf).unwrap();
        let back = read_spectrum(buf.as_slice(), AxisUnit::ElectronVolts).unwrap();
        prop_assert_eq!(back.xs(), s.xs());
        prop_assert_eq!(back.counts(), s.counts());
    }

    #[test]
    fn debye_waller_decreases_with_sideband_scale(d in 0.01f64..1.0, f in 0.0f64..5.0, df in 1e-3f64..1.0) {
        let a = debye_waller(f, d).unwrap();
        let b = debye_waller(f + df, d).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        if d < 1.0 { prop_assert!(b < a); } else { prop_assert_eq!(a, b); }
    }

    #[test]
    fn curve_fraction_agrees_with_relation(amps in prop::collection::vec(0.01f64..2.0, 1..5), f in 0.0f64..3.0) {
        let mut modes = vec![Mode::new(0.0, 1.0)];
        modes.extend(amps.iter().enumerate().map(|(i, &r)| Mode::new(0.05 * (i + 1) as f64, r)));
        let dw_sim = 1.0 / (1.0 + amps.iter().sum::<f64>());
        let list = DefectLineList::new("p", modes, dw_sim, DwPolicy::Strict).unwrap();
        let m = SpectralFitModel::lorentzian(list, 1.0, 0.01, 2.0, f).unwrap();
        prop_assert!((dw_from_curve(&m) - debye_waller(f, dw_sim).unwrap()).abs() < 1e-12);
        prop_assert_eq!(m.profile, Profile::Lorentzian);
    }

    #[test]
    fn multi_exponential_limits(sigma in 0.01f64..1.0, a3 in 0.0f64..3.0, a4 in 0.0f64..3.0) {
        let g = g2_multi_exponential(5e-9, 1e-4, 1e-5, a3, a4, sigma, &[0.0, 1.0]).unwrap();
        prop_assert!((g[0] - (1.0 - sigma * sigma)).abs() <= 1e-15);
        prop_assert!((g[1] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rate_model_steady_state_and_limits(lk in prop::collection::vec(2.0f64..9.0, 6), sigma in 0.05f64..1.0) {
        let k: Vec<f64> = lk.iter().map(|l| 10f64.powf(*l)).collect();
        let sys = LevelSystem::four_level(FourLevelRates { k12: k[0], k21: k[1], k23: k[2], k24: k[3], k31: k[4], k41: k[5] }).unwrap();
        let p = steady_state(&sys).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let mp = sys.generator() * nalgebra::DVector::from_column_slice(&p);
        prop_assert!(mp.amax() <= 1e-12 * sys.max_rate());
        let g = g2_rate_equation(&sys, sigma, &[0.0, 1e4]).unwrap();
        prop_assert!((g[0] - (1.0 - sigma * sigma)).abs() < 1e-12);
        prop_assert!((g[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn propagation_conserves_probability(lk in prop::collection::vec(2.0f64..9.0, 4), lt in -10.0f64..-1.0) {
        let k: Vec<f64> = lk.iter().map(|l| 10f64.powf(*l)).collect();
        let sys = LevelSystem::three_level(k[0], k[1], k[2], k[3]).unwrap();
        let rho0 = [1.0, 0.0, 0.0];
        for method in [Propagator::Auto, Propagator::Expm] {
            let p = populations(&sys, &rho0, &[10f64.powf(lt)], method).unwrap();
            prop_assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p[0].iter().all(|&v| v > -1e-12));
        }
    }
}
