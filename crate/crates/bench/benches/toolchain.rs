use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use relic_core::scrub::{Level, MemoryGeometry};
use relic_core::seu::{build_device_model, ResourceUsage, DEFAULT_FRAME_FACTOR};
use relic_core::sim::random_vectors;
use relic_core::*;

fn tmr_conv() -> (DataflowGraph, HardenedDesign, FabricArch) {
    let dfg = gen_conv(2);
    let mode = HardeningMode::TmrFu;
    let kernels = [dfg.clone(), gen_sad(2)];
    let req = size_requirements(&kernels, &mode).unwrap();
    let arch = minimal_fabric(&req, mode.fabric_mode(), 6, dfg.width, 2).unwrap();
    let design = assign_hardening(&dfg, &mode).unwrap();
    (dfg, design, arch)
}

fn bench_compile(c: &mut Criterion) {
    let (_, design, arch) = tmr_conv();
    c.bench_function("compile conv2x2 tmr_fu", |b| {
        b.iter(|| compile(black_box(&design), &arch, 0, &BTreeSet::new()).unwrap())
    });
    let sobel = gen_sobel();
    let d = assign_hardening(&sobel, &HardeningMode::None).unwrap();
    let req = size_requirements(std::slice::from_ref(&sobel), &HardeningMode::None).unwrap();
    let a = minimal_fabric(&req, FabricMode::Plain, 8, sobel.width, 2).unwrap();
    c.bench_function("compile sobel plain", |b| b.iter(|| compile(black_box(&d), &a, 0, &BTreeSet::new()).unwrap()));
}

fn bench_simulate(c: &mut Criterion) {
    let (dfg, design, arch) = tmr_conv();
    let compiled = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
    let vectors = random_vectors(&dfg, 1000, 0);
    let sim = Simulator::new(&arch, &compiled.io);
    c.bench_function("simulate 1000 vectors", |b| {
        b.iter(|| sim.run(&compiled.bitstream, black_box(&vectors), &FaultState::none()).unwrap())
    });
}

fn bench_campaign(c: &mut Criterion) {
    let (dfg, design, arch) = tmr_conv();
    let compiled = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
    let vectors = random_vectors(&dfg, 16, 0);
    let scope = Scope::Random { count: 128, seed: 0 };
    let mut g = c.benchmark_group("campaign");
    g.sample_size(20);
    for jobs in [1, 0] {
        g.bench_function(format!("128 bits jobs={jobs}"), |b| {
            b.iter(|| run_campaign(&arch, &compiled.bitstream, &compiled.io, &dfg, &vectors, &scope, 0, jobs).unwrap())
        });
    }
    g.finish();
}

fn bench_scrub(c: &mut Criterion) {
    let (_, design, arch) = tmr_conv();
    let compiled = compile(&design, &arch, 0, &BTreeSet::new()).unwrap();
    let usage = ResourceUsage::from_compiled(&compiled);
    let model = build_device_model(&arch, &usage, DEFAULT_FRAME_FACTOR);
    let (up, dev) = (MemoryGeometry::overlay(&compiled.layout, &usage), MemoryGeometry::device(&model));
    let trace = UpsetTrace::random(1000, Level::Upper, up.bits.len(), 10_000_000, 0);
    let cfg = ScrubConfig::default();
    c.bench_function("scrub 1000 upsets", |b| b.iter(|| run_two_level(&up, &dev, black_box(&trace), &cfg).unwrap()));
}

criterion_group!(benches, bench_compile, bench_simulate, bench_campaign, bench_scrub);
criterion_main!(benches);
