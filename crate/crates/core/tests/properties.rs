//! Randomized invariants over synthetic machines and kernels. None of these
//! read the bundled fixtures.

mod common;

use common::{arb_kernel, arb_machine, arb_mix, arb_victim_machine, SIMD};
use ecmkit::notation::display_tuple;
use ecmkit::validation::rel_error;
use ecmkit::{
    compose, contributions, link_volumes, multicore, peak_performance, predict, rescale_frequency, roofline,
    saturation_point, saturation_sweep_with, traffic, utilization_curve, Execution, L3Policy, MachineModel,
    Residence, SaturationPoint,
};
use proptest::prelude::*;

fn levels(m: &MachineModel) -> Vec<Residence> {
    Residence::ALL
        .into_iter()
        .filter(|&r| r != Residence::L3 || m.l3_policy != L3Policy::None)
        .collect()
}

proptest! {
    #[test]
    fn predictions_never_decrease_with_deeper_residence(m in arb_machine(), k in arb_kernel()) {
        let p = compose(&contributions(&k, &m, SIMD, Residence::Mem).unwrap());
        for w in p.levels.windows(2) {
            prop_assert!(w[1].1 >= w[0].1, "{:?}", p.levels);
        }
        // Stopping at a shallower residence gives the same prefix. A victim L3
        // sees different traffic when it holds the data than when memory does.
        for r in levels(&m).into_iter().filter(|&r| r <= Residence::L2 || m.l3_policy != L3Policy::Victim) {
            let q = compose(&contributions(&k, &m, SIMD, r).unwrap());
            prop_assert_eq!(q.serial_cy(), p.at(r).unwrap());
        }
    }

    #[test]
    fn multicore_falls_to_the_memory_floor(m in arb_machine(), k in arb_kernel()) {
        let p = predict(&k, &m, SIMD, Residence::Mem).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..=64 {
            let t = multicore(&p, n).unwrap();
            prop_assert!(t <= prev);
            prop_assert!(t >= p.mem_bottleneck_cy);
            prev = t;
        }
        if let SaturationPoint::Cores(ns) = p.n_s {
            prop_assert_eq!(multicore(&p, ns).unwrap(), p.mem_bottleneck_cy);
            if ns > 1 {
                prop_assert!(multicore(&p, ns - 1).unwrap() > p.mem_bottleneck_cy);
            }
        }
    }

    #[test]
    fn memory_terms_scale_with_clock_and_cache_terms_do_not(
        m in arb_machine(),
        k in arb_kernel(),
        f in 0.8f64..5.0,
    ) {
        let base = contributions(&k, &m, SIMD, Residence::Mem).unwrap();
        let fast = contributions(&k, &rescale_frequency(&m, f).unwrap(), SIMD, Residence::Mem).unwrap();
        let ratio = f / m.core_freq_ghz;
        for (a, b) in base.links.iter().zip(&fast.links) {
            prop_assert_eq!(a.link, b.link);
            if a.link.is_memory() {
                prop_assert!((b.cy - a.cy * ratio).abs() <= 1e-9 * (1.0 + b.cy));
            } else {
                prop_assert_eq!(a.cy, b.cy);
            }
        }
        prop_assert_eq!(base.t_ol_cy, fast.t_ol_cy);
        prop_assert_eq!(base.t_nol_cy, fast.t_nol_cy);
    }

    #[test]
    fn victim_cache_conserves_memory_volume(m in arb_victim_machine(), k in arb_kernel()) {
        let t = traffic(&k);
        let v = link_volumes(&t, &m, Residence::Mem).unwrap();
        prop_assert!((v.v_l2mem_b + v.v_l3mem_b - t.total_b()).abs() <= 1e-9 * t.total_b().max(1.0));
    }

    #[test]
    fn l1_prediction_ignores_the_memory_system(m in arb_machine(), k in arb_kernel(), f in 0.8f64..5.0) {
        let at = |m: &MachineModel| compose(&contributions(&k, m, SIMD, Residence::L1).unwrap()).serial_cy();
        let c = contributions(&k, &m, SIMD, Residence::L1).unwrap();
        prop_assert_eq!(at(&m), c.t_ol_cy.max(c.t_nol_cy));
        prop_assert_eq!(at(&m), at(&rescale_frequency(&m, f).unwrap()));
        prop_assert!(c.links.is_empty());
    }

    #[test]
    fn saturation_point_agrees_with_a_scan(serial in 0.01f64..500.0, bottleneck in 0.01f64..50.0) {
        let scanned = (1..).find(|&n| serial / n as f64 <= bottleneck).unwrap();
        prop_assert_eq!(saturation_point(serial, bottleneck), SaturationPoint::Cores(scanned));
        let ceil = (serial / bottleneck).ceil().max(1.0) as usize;
        prop_assert!(scanned.abs_diff(ceil) <= 1);
    }

    #[test]
    fn utilization_is_a_fraction_and_grows_with_cores(
        m in arb_machine(),
        mix in arb_mix(5),
    ) {
        let u = utilization_curve(Execution::Sequential, &mix, &m, SIMD).unwrap();
        prop_assert_eq!(u.len(), m.n_cores);
        for x in &u {
            prop_assert!((0.0..=1.0).contains(x));
        }
        for w in u.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree(
        m in arb_machine(),
        mix in arb_mix(4),
        freqs in prop::collection::vec(0.8f64..4.0, 1..6),
        threshold in 0.0f64..=1.0,
    ) {
        let seq = saturation_sweep_with(Execution::Sequential, &mix, &m, SIMD, &freqs, threshold).unwrap();
        let par = saturation_sweep_with(Execution::Parallel, &mix, &m, SIMD, &freqs, threshold).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn relative_error_swaps_consistently(pred in 0.01f64..1e4, meas in 0.01f64..1e4) {
        let forward = rel_error(pred, meas);
        let backward = rel_error(meas, pred);
        prop_assert!(((1.0 + forward) * (1.0 + backward) - 1.0).abs() < 1e-9);
        prop_assert_eq!(forward.signum() * backward.signum() <= 0.0, true);
        prop_assert_eq!(rel_error(pred, pred), 0.0);
    }

    #[test]
    fn roofline_is_capped_and_linear_below_the_ridge(m in arb_machine(), i in 0.001f64..100.0, n in 1usize..32) {
        let n = n.min(m.n_cores);
        let peak = peak_performance(&m, SIMD, n).unwrap();
        let r = roofline(i, &m, SIMD, n).unwrap();
        prop_assert!(r <= peak);
        let ridge = peak / m.mem_bw_gbs;
        if i < ridge {
            let half = roofline(i / 2.0, &m, SIMD, n).unwrap();
            prop_assert!((2.0 * half - r).abs() <= 1e-9 * r);
        }
    }

    #[test]
    fn displayed_predictions_add_up(m in arb_machine(), k in arb_kernel()) {
        let t = display_tuple(&contributions(&k, &m, SIMD, Residence::Mem).unwrap());
        let scale = 10f64.powi(t.decimals as i32);
        let mut data = t.t_nol;
        prop_assert_eq!(t.predictions[0], t.t_ol.max(t.t_nol));
        for (term, pred) in t.terms.iter().zip(&t.predictions[1..]) {
            data += term;
            prop_assert!((pred - t.t_ol.max(data)).abs() <= 0.5 / scale + 1e-9);
        }
    }
}
