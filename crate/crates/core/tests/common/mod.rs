//! Synthetic machine and kernel generators shared by the randomized suites.

#![allow(dead_code)]

use std::path::Path;

use ecmkit::{KernelSpec, L3Policy, MachineModel, SimdLevel, WeightedKernel};
use proptest::prelude::*;

/// Every generated kernel carries timing for this level only.
pub const SIMD: SimdLevel = SimdLevel::Avx;

#[derive(Debug, Clone)]
struct MachineParams {
    freq: f64,
    mem_bw: f64,
    cores: usize,
    l1l2: f64,
    l2l3: f64,
    policy: &'static str,
    duplex: bool,
}

fn machine_toml(p: &MachineParams) -> String {
    let duplex = if p.policy == "victim" {
        format!("l2l3_duplex = {}\n", p.duplex)
    } else {
        String::new()
    };
    format!(
        r#"
name = "synthetic"
core_freq_ghz = {freq}
uncore_freq_ghz = {freq}
mem_bw_gbs = {bw}
n_cores = {cores}
cache_line_b = 64
l1l2_bw_bcy = {l1l2}
l2l3_bw_bcy = {l2l3}
{duplex}l3_policy = "{policy}"
fma_per_cy = 2
flops_per_fma = 2
simd_max = "avx512"
load_throughput = {{ scalar = 2.0, sse = 2.0, avx = 2.0, avx2 = 2.0, avx512 = 2.0 }}
store_throughput = {{ scalar = 1.0, sse = 1.0, avx = 1.0, avx2 = 1.0, avx512 = 1.0 }}

[throughputs]
scalar_exp_cy = 15.0

[throughputs.per_simd]
scalar = {{ exp_cy_per_scalar_it = 15.0, div_cy_per_scalar_it = 4.0 }}
sse = {{ exp_cy_per_scalar_it = 7.0, div_cy_per_scalar_it = 2.0 }}
avx = {{ exp_cy_per_scalar_it = 3.5, div_cy_per_scalar_it = 2.0 }}
avx2 = {{ exp_cy_per_scalar_it = 3.5, div_cy_per_scalar_it = 2.0 }}
avx512 = {{ exp_cy_per_scalar_it = 1.5, div_cy_per_scalar_it = 2.0 }}
"#,
        freq = p.freq,
        bw = p.mem_bw,
        cores = p.cores,
        l1l2 = p.l1l2,
        l2l3 = p.l2l3,
        policy = p.policy,
    )
}

pub fn arb_machine() -> impl Strategy<Value = MachineModel> {
    (
        1.0f64..4.0,
        10.0f64..200.0,
        1usize..32,
        8.0f64..64.0,
        4.0f64..32.0,
        prop::sample::select(vec!["inclusive", "victim", "none"]),
        any::<bool>(),
    )
        .prop_map(|(freq, mem_bw, cores, l1l2, l2l3, policy, duplex)| {
            let p = MachineParams {
                freq,
                mem_bw,
                cores,
                l1l2,
                l2l3,
                policy,
                duplex,
            };
            MachineModel::from_toml_str(&machine_toml(&p), Path::new("synthetic.machine")).unwrap()
        })
}

pub fn arb_victim_machine() -> impl Strategy<Value = MachineModel> {
    arb_machine().prop_filter("victim L3", |m| m.l3_policy == L3Policy::Victim)
}

#[derive(Debug, Clone)]
struct Stream {
    elem_b: u32,
    access: &'static str,
    count: u32,
    run: f64,
}

fn arb_stream() -> impl Strategy<Value = Stream> {
    (
        prop::sample::select(vec![4u32, 8]),
        prop::sample::select(vec!["read", "write", "update"]),
        1u32..4,
        1.0f64..8.0,
    )
        .prop_map(|(elem_b, access, count, run)| Stream {
            elem_b,
            access,
            count,
            run: if access == "read" { run } else { 1.0 },
        })
}

fn kernel_toml(streams: &[Stream], t_ol: f64, t_nol: f64, n_exp: u32) -> String {
    let body: Vec<String> = streams
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "  {{ name = \"s{i}\", elem_b = {}, access = \"{}\", accesses_per_it = {}, locality_run_length = {} }},",
                s.elem_b, s.access, s.count, s.run
            )
        })
        .collect();
    format!(
        "name = \"k\"\nclass = \"state\"\nwork_unit = \"instance\"\nstreams = [\n{}\n]\n\
         timing = [ {{ machine = \"synthetic\", simd = \"avx\", t_ol_base_cy = {t_ol}, n_exp = {n_exp}, t_nol_cy = {t_nol} }} ]\n",
        body.join("\n")
    )
}

pub fn arb_kernel() -> impl Strategy<Value = KernelSpec> {
    (
        prop::collection::vec(arb_stream(), 1..8),
        0.0f64..100.0,
        0.0f64..30.0,
        0u32..3,
    )
        .prop_map(|(streams, t_ol, t_nol, n_exp)| {
            KernelSpec::from_toml_str(&kernel_toml(&streams, t_ol, t_nol, n_exp), Path::new("k.kernel")).unwrap()
        })
}

pub fn arb_mix(max_len: usize) -> impl Strategy<Value = Vec<WeightedKernel>> {
    prop::collection::vec((arb_kernel(), 0.1f64..10.0), 1..max_len)
        .prop_map(|ks| ks.into_iter().map(|(kernel, weight)| WeightedKernel { kernel, weight }).collect())
}
