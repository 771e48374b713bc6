//! Values computed by hand from the machine and kernel parameters, frozen here
//! so the model code is checked against an independent calculation.

use ecmkit::{
    link_volumes, multicore, predict, roofline, traffic, work_rate, worst_case_branching, worst_case_random_traffic,
    FixtureSet, Residence, SimdLevel,
};

fn fx() -> FixtureSet {
    FixtureSet::load_default().unwrap()
}

fn near(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn im_current_victim_volumes_on_skx() {
    let fx = fx();
    let t = traffic(fx.kernel("im_current").unwrap());
    let v = link_volumes(&t, fx.machine("skx").unwrap(), Residence::Mem).unwrap();
    near(v.v_l2l3_write_b, 88.0, 1e-9);
    near(v.v_l2mem_b, 88.0, 1e-9);
    near(v.v_l3mem_b, 48.0, 1e-9);
    // 88 B over a 16 B/cy link
    near(v.v_l2l3_write_b / 16.0, 5.5, 1e-12);
}

#[test]
fn branching_penalty_is_a_line_per_indirect_array() {
    let fx = fx();
    let k = fx.kernel("linear_algebra").unwrap();
    let t = traffic(k);
    let full = worst_case_branching(&t, k, 1.0, 64).unwrap();
    let tenth = worst_case_branching(&t, k, 0.1, 64).unwrap();
    near(full.total_b() - t.total_b(), 3.0 * 64.0 - 24.0, 1e-9);
    near(tenth.total_b() - t.total_b(), 0.1 * (3.0 * 64.0 - 24.0), 1e-9);
}

#[test]
fn spike_worst_case_volume_follows_line_size() {
    let k = fx().kernel("spike_delivery").unwrap().clone();
    near(worst_case_random_traffic(&k, 64).unwrap().total_b(), 1740.0, 1e-9);
    near(worst_case_random_traffic(&k, 32).unwrap().total_b(), 876.0, 1e-9);
}

#[test]
fn work_rates() {
    let fx = fx();
    let skx = fx.machine("skx").unwrap();
    let ivb = fx.machine("ivb").unwrap();
    near(work_rate(13.3, skx, "neuron").unwrap().giga(), 2.3 / 13.3, 1e-12);
    near(work_rate(21.4, ivb, "neuron").unwrap().giga(), 0.1028, 1e-4);
}

#[test]
fn roofline_below_the_ridge() {
    let fx = fx();
    let ivb = fx.machine("ivb").unwrap();
    let skx = fx.machine("skx").unwrap();
    // bandwidth times intensity
    near(roofline(0.0625, ivb, SimdLevel::Avx, ivb.n_cores).unwrap(), ivb.mem_bw_gbs * 0.0625, 1e-9);
    near(roofline(0.0625, ivb, SimdLevel::Avx, ivb.n_cores).unwrap(), 2.5, 1e-9);
    near(roofline(0.0625, skx, SimdLevel::Avx, skx.n_cores).unwrap(), 6.5625, 1e-9);
}

#[test]
fn linear_algebra_seven_threads_on_skx() {
    let fx = fx();
    let skx = fx.machine("skx").unwrap();
    let p = predict(fx.kernel("linear_algebra").unwrap(), skx, SimdLevel::Scalar, Residence::Mem).unwrap();
    near(multicore(&p, 7).unwrap(), 1.9, 0.05);
}
