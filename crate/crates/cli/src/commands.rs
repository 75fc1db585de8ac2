use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use relic_core::arch::{bit_layout, decode_bitstream, Bitstream, BitstreamLayout, ResourceKind};
use relic_core::harden::{area_proxy, assign_hardening, minimal_fabric, size_requirements};
use relic_core::pnr::{compile, IoBinding, Netlist};
use relic_core::repair::{check_policy, dynamic_repair, precompile, precompiled_repair, Granularity, RepairPlan, SparePolicy};
use relic_core::scrub::{run_two_level, Level, Levels, MemoryGeometry, Schedule, ScrubConfig, UpsetTrace};
use relic_core::seu::{build_device_model, lower_sensitivity, BitClass, Campaign, ResourceUsage, Scope, SeuError, DEFAULT_FRAME_FACTOR};
use relic_core::sim::{compare_golden, random_vectors, Equivalence, FaultState, SimError, Simulator};
use relic_core::{Coord, Op};
use serde::Serialize;
use serde_json::json;

use crate::exit::{self, Code, Failure, OrExit, Outcome};
use crate::inputs::{self, Design};
use crate::manifest::Run;
use crate::{CompileArgs, InjectArgs, RepairArgs, ScrubArgs, SimArgs, SizeArgs};

fn open(subcommand: &'static str, seed: u64, out: Option<&Path>) -> Result<Run, Failure> {
    Run::new(subcommand, seed, out).or_exit(Code::Input)
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|t| t.to_string()).collect::<Vec<_>>().join(sep)
}

fn io_err(e: anyhow::Error) -> Failure {
    Failure::new(Code::Internal, e)
}

/// A configured fabric: bitstream, I/O binding and the resources it occupies.
struct Configured {
    layout: BitstreamLayout,
    bitstream: Bitstream,
    io: IoBinding,
    usage: ResourceUsage,
    loaded: bool,
}

fn configure(d: &Design, bitstream: Option<&Path>, seed: u64, run: &mut Run) -> Result<Configured, Failure> {
    match bitstream {
        Some(path) => {
            let bs = inputs::bitstream(path, &d.arch, run)?;
            let layout = bit_layout(&d.arch);
            let io = IoBinding::new(&Netlist::build(&d.design.dfg), &d.design.dfg, &d.arch).map_err(exit::pnr)?;
            let decoded = decode_bitstream(&layout, &bs).or_exit(Code::Input)?;
            let usage = ResourceUsage::from_config(&d.arch, &layout, &decoded.config);
            Ok(Configured {
                layout,
                bitstream: bs,
                io,
                usage,
                loaded: true,
            })
        }
        None => {
            let c = compile(&d.design, &d.arch, seed, &BTreeSet::new()).map_err(exit::pnr)?;
            let usage = ResourceUsage::from_compiled(&c);
            Ok(Configured {
                layout: c.layout,
                bitstream: c.bitstream,
                io: c.io,
                usage,
                loaded: false,
            })
        }
    }
}

pub fn size(args: &SizeArgs, seed: u64) -> Outcome {
    let mut run = open("size", seed, args.out.as_deref())?;
    let kernels = args
        .kernels
        .iter()
        .map(|k| inputs::kernel(k, &mut run))
        .collect::<Result<Vec<_>, _>>()?;
    let mode = inputs::mode(&args.mode)?;
    run.param("mode", mode.name());
    run.param("channel_width", args.channel_width);
    run.param("separation", args.separation);
    let width = kernels[0].width;
    if let Some(k) = kernels.iter().find(|k| k.width != width) {
        return Err(Failure::new(
            Code::Input,
            anyhow!("kernel {} is {} bits wide, {} is {}", k.name, k.width.bits(), kernels[0].name, width.bits()),
        ));
    }
    let mut per_kernel = BTreeMap::new();
    for k in &kernels {
        let d = assign_hardening(k, &mode).or_exit(Code::Input)?;
        per_kernel.insert(k.name.clone(), d.resource_counts());
    }
    let req = size_requirements(&kernels, &mode).or_exit(Code::Input)?;
    let arch = minimal_fabric(&req, mode.fabric_mode(), args.channel_width, width, args.separation).or_exit(Code::Input)?;
    let area = area_proxy(&arch);

    println!("{:<12} cells", "kernel");
    for (name, counts) in &per_kernel {
        let cells: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
        println!("{:<12} {}", name, cells.join(" "));
    }
    let cells: Vec<String> = req.iter().map(|(c, n)| format!("{c}={n}")).collect();
    println!("{:<12} {}", "required", cells.join(" "));
    println!(
        "fabric {}x{}  config bits {} (fu {}, cb {}, sb {})  routing {:.1}%",
        area.rows,
        area.cols,
        area.total_bits,
        area.fu_bits,
        area.cb_bits,
        area.sb_bits,
        100.0 * area.routing_fraction()
    );

    let body = json!({
        "mode": mode.name(),
        "kernels": per_kernel,
        "required": req,
        "required_total": req.total(),
        "by_kind": Op::ALL.iter().map(|&k| (k.name(), req.kind(k))).collect::<BTreeMap<_, _>>(),
        "fabric": arch.name(),
        "area": area,
        "routing_bits": area.routing_bits(),
        "routing_fraction": area.routing_fraction(),
    });
    run.write_json("size.json", &body).map_err(io_err)?;
    run.write_bytes("fabric.txt", arch.to_text().as_bytes()).map_err(io_err)?;
    run.finish().map_err(io_err)
}

pub fn compile_cmd(args: &CompileArgs, seed: u64) -> Outcome {
    let mut run = open("compile", seed, Some(&args.out))?;
    let d = inputs::design(&args.design, &mut run)?;
    let c = compile(&d.design, &d.arch, seed, &BTreeSet::new()).map_err(exit::pnr)?;
    let report = c.report(seed);
    println!(
        "{} ({}) on {}x{}: {} nodes, {} nets, wirelength {}, {} config bits in {} frames, latency {}",
        report.kernel,
        report.mode,
        d.arch.rows(),
        d.arch.cols(),
        report.nodes,
        report.nets,
        report.wirelength,
        report.total_config_bits,
        report.frames,
        report.latency
    );
    run.write_bytes("bitstream.rovb", &c.bitstream.to_bytes()).map_err(io_err)?;
    run.write_bytes("fabric.txt", d.arch.to_text().as_bytes()).map_err(io_err)?;
    run.write_bytes("kernel.dfg", d.design.original.to_text().as_bytes()).map_err(io_err)?;
    run.write_json("report.json", &report).map_err(io_err)?;
    run.finish().map_err(io_err)
}

pub fn sim(args: &SimArgs, seed: u64) -> Outcome {
    let mut run = open("sim", seed, Some(&args.out))?;
    let d = inputs::design(&args.design, &mut run)?;
    let cfg = configure(&d, args.bitstream.as_deref(), seed, &mut run)?;
    let reference = &d.design.original;
    let vectors = match &args.vectors {
        Some(p) => inputs::vectors(p, reference, &mut run)?,
        None => {
            run.param("random", args.random);
            random_vectors(reference, args.random, seed)
        }
    };
    let stuck = args
        .stuck
        .iter()
        .map(|s| inputs::cell(s))
        .collect::<Result<BTreeSet<Coord>, _>>()?;
    if let Some(c) = stuck.iter().find(|c| d.arch.cell(**c).is_none()) {
        return Err(Failure::new(Code::Input, anyhow!("stuck cell {c} is not a functional unit")));
    }
    let faults = FaultState {
        flipped: args.flip.iter().copied().collect(),
        stuck,
    };
    run.param("flip", join(&faults.flipped, ","));
    run.param("stuck", join(&faults.stuck, " "));

    let sim = Simulator::new(&d.arch, &cfg.io);
    let result = match sim.run(&cfg.bitstream, &vectors, &faults) {
        Ok(r) => r,
        Err(SimError::Undecodable(why)) => {
            println!("configuration is undecodable: {why}");
            let body = json!({
                "kernel": reference.name,
                "vectors": vectors.len(),
                "faults": faults,
                "class": "undecodable",
                "reason": why,
            });
            run.write_json("sim.json", &body).map_err(io_err)?;
            return run.finish().map_err(io_err);
        }
        Err(e) => return Err(Failure::new(Code::Input, e)),
    };
    let eq = compare_golden(&result, reference, &vectors);
    let class = match eq.class {
        Equivalence::Equal => "equal",
        Equivalence::Corrupted => "corrupted",
        Equivalence::DetectedOnly => "detected",
    };
    println!(
        "{} vectors, latency {}: {} ({} mismatching, flag {})",
        vectors.len(),
        result.latency,
        class,
        eq.mismatches(),
        if eq.flagged { "raised" } else { "low" }
    );

    let out_names: Vec<&str> = reference.outputs.iter().map(|o| o.name.as_str()).collect();
    run.write_csv("outputs.csv", |w| {
        let mut header = vec!["vector".to_string(), "cycle".to_string()];
        header.extend(out_names.iter().map(|n| n.to_string()));
        header.extend(result.flag_cells.iter().map(|c| format!("flag_{}_{}", c.row, c.col)));
        header.push("match".into());
        w.write_record(&header)?;
        for (i, outs) in result.outputs.iter().enumerate() {
            let mut row = vec![i.to_string(), result.sample_cycles[i].to_string()];
            row.extend(outs.iter().map(|v| v.to_string()));
            row.extend(result.flags[i].iter().map(|f| u8::from(*f).to_string()));
            row.push(u8::from(eq.matches[i]).to_string());
            w.write_record(&row)?;
        }
        Ok(())
    })
    .map_err(io_err)?;
    let body = json!({
        "kernel": reference.name,
        "vectors": vectors.len(),
        "latency": result.latency,
        "faults": faults,
        "class": class,
        "mismatches": eq.mismatches(),
        "flagged": eq.flagged,
        "flag_cells": result.flag_cells,
    });
    run.write_json("sim.json", &body).map_err(io_err)?;
    run.finish().map_err(io_err)
}

fn parse_scope(s: &str, seed: u64) -> Result<Scope, Failure> {
    let bad = || Failure::new(Code::Input, anyhow!("bad bit scope `{s}`: expected all, random:<n> or kinds:<kind>[,<kind>...]"));
    if s == "all" {
        return Ok(Scope::All);
    }
    if let Some(n) = s.strip_prefix("random:") {
        return Ok(Scope::Random {
            count: n.parse().map_err(|_| bad())?,
            seed,
        });
    }
    if let Some(list) = s.strip_prefix("kinds:") {
        let kinds = list
            .split(',')
            .map(|k| ResourceKind::parse(k.trim()).ok_or_else(bad))
            .collect::<Result<BTreeSet<_>, _>>()?;
        return Ok(Scope::Kinds(kinds));
    }
    Err(bad())
}

#[derive(Serialize)]
struct LowerSummary {
    factor: usize,
    frames: usize,
    total_bits: usize,
    essential_bits: usize,
    essential_frames: usize,
    essential_static: usize,
    totals: BTreeMap<BitClass, usize>,
}

pub fn inject(args: &InjectArgs, seed: u64) -> Outcome {
    let mut run = open("inject", seed, Some(&args.out))?;
    let d = inputs::design(&args.design, &mut run)?;
    let cfg = configure(&d, args.bitstream.as_deref(), seed, &mut run)?;
    let scope = parse_scope(&args.bits, seed)?;
    run.param("bits", scope.describe());
    run.param("vectors", args.vectors);
    let reference = &d.design.original;
    let vectors = random_vectors(reference, args.vectors, seed);
    let seu = |e: SeuError| match e {
        SeuError::Baseline(_) if !cfg.loaded => Failure::new(Code::Internal, e),
        SeuError::Pool(_) => Failure::new(Code::Internal, e),
        e => Failure::new(Code::Input, e),
    };
    let started = Instant::now();
    let campaign = Campaign::new(&d.arch, &cfg.bitstream, &cfg.io, reference, &vectors).map_err(seu)?;
    let map = campaign.run(&scope, seed, args.jobs).map_err(seu)?;
    let elapsed = started.elapsed();
    let summary = map.summary();
    println!(
        "{} bits injected: {} benign, {} detected, {} sdc",
        summary.injected,
        map.count(BitClass::Benign),
        map.count(BitClass::Detected),
        map.count(BitClass::Sdc)
    );
    eprintln!("campaign took {:.2}s", elapsed.as_secs_f64());

    run.write_csv("sensitivity.csv", |w| {
        w.write_record(["bit_index", "frame", "offset", "resource_kind", "row", "col", "class"])?;
        for r in &map.records {
            w.write_record([
                r.bit_index.to_string(),
                r.frame.to_string(),
                r.offset.to_string(),
                r.resource_kind.name(),
                r.coord.row.to_string(),
                r.coord.col.to_string(),
                r.class.name().to_string(),
            ])?;
        }
        Ok(())
    })
    .map_err(io_err)?;
    run.write_json("summary.json", &summary).map_err(io_err)?;
    if args.lower {
        let model = build_device_model(&d.arch, &cfg.usage, DEFAULT_FRAME_FACTOR);
        let lower = lower_sensitivity(&model, &map);
        let body = LowerSummary {
            factor: DEFAULT_FRAME_FACTOR,
            frames: model.frame_count(),
            total_bits: model.total_bits(),
            essential_bits: model.essential_bits(),
            essential_frames: model.essential_frames().len(),
            essential_static: lower.essential_static,
            totals: lower.totals,
        };
        println!(
            "device: {} bits in {} frames, {} essential",
            body.total_bits, body.frames, body.essential_bits
        );
        run.write_json("lower.json", &body).map_err(io_err)?;
    }
    run.finish().map_err(io_err)
}

pub fn scrub(args: &ScrubArgs, seed: u64) -> Outcome {
    let mut run = open("scrub", seed, Some(&args.out))?;
    let d = inputs::design(&args.design, &mut run)?;
    let cfg = configure(&d, None, seed, &mut run)?;
    let levels = match args.level.as_str() {
        "upper" => Levels::Upper,
        "lower" => Levels::Lower,
        "both" => Levels::Both,
        other => return Err(Failure::new(Code::Input, anyhow!("unknown level `{other}`"))),
    };
    let schedule = match args.schedule.as_str() {
        "round_robin" | "rr" => Schedule::RoundRobin,
        "priority" => Schedule::Priority,
        other => return Err(Failure::new(Code::Input, anyhow!("unknown schedule `{other}`"))),
    };
    let config = ScrubConfig {
        levels,
        schedule,
        t_f: args.tf,
        t_w: args.tw,
        period: args.period,
    };
    config.validate().or_exit(Code::Input)?;
    for (k, v) in [("level", args.level.clone()), ("schedule", args.schedule.clone())] {
        run.param(k, v);
    }
    run.param("tf", args.tf);
    run.param("tw", args.tw);
    run.param("factor", args.factor);
    if let Some(p) = args.period {
        run.param("period", p);
    }

    let overlay = MemoryGeometry::overlay(&cfg.layout, &cfg.usage);
    let model = build_device_model(&d.arch, &cfg.usage, args.factor.max(1));
    let device = MemoryGeometry::device(&model);
    let trace = match (&args.upsets, args.random) {
        (Some(p), _) => inputs::trace(p, &mut run)?,
        (None, Some(n)) => {
            run.param("random", n);
            run.param("span", args.span);
            let mut events = Vec::new();
            for (i, level) in [Level::Upper, Level::Lower].into_iter().enumerate() {
                if levels.includes(level) {
                    let bits = if level == Level::Upper { overlay.bits.len() } else { device.bits.len() };
                    events.extend(UpsetTrace::random(n, level, bits, args.span, seed + i as u64).events);
                }
            }
            events.sort_by_key(|e| e.cycle);
            UpsetTrace { events }
        }
        (None, None) => return Err(Failure::new(Code::Input, anyhow!("give --upsets or --random"))),
    };
    let report = run_two_level(&overlay, &device, &trace, &config).or_exit(Code::Input)?;
    for (level, s) in &report.levels {
        println!(
            "{:<6} {} frames, clean pass {} cycles: {} events, {} corrected, {} uncorrectable, mean detection {}",
            level.name(),
            s.frames,
            s.clean_pass_duration,
            s.events,
            s.corrected,
            s.uncorrectable,
            s.mean_detection_latency.map_or("-".into(), |v| format!("{v:.0}"))
        );
    }
    run.write_csv("events.csv", |w| {
        w.write_record([
            "cycle",
            "level",
            "bit_index",
            "frame",
            "detected",
            "corrected",
            "uncorrectable",
            "by_reconfiguration",
            "pass",
        ])?;
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        for e in &report.events {
            w.write_record([
                e.cycle.to_string(),
                e.level.name().to_string(),
                e.bit_index.to_string(),
                e.frame.to_string(),
                opt(e.detected),
                opt(e.corrected),
                e.uncorrectable.to_string(),
                e.by_reconfiguration.to_string(),
                opt(e.pass),
            ])?;
        }
        Ok(())
    })
    .map_err(io_err)?;
    let body = json!({
        "config": report.config,
        "levels": report.levels,
        "passes": report.passes,
    });
    run.write_json("scrub.json", &body).map_err(io_err)?;
    run.finish().map_err(io_err)
}

#[derive(Serialize)]
struct PlanEntry<'a> {
    excluded: &'a BTreeSet<Coord>,
    used: &'a BTreeSet<Coord>,
    changed_frames: &'a [usize],
    reconfiguration_cycles: u64,
    file: String,
}

pub fn repair(args: &RepairArgs, seed: u64) -> Outcome {
    let mut run = open("repair", seed, Some(&args.out))?;
    let d = inputs::design(&args.design, &mut run)?;
    let granularity = Granularity::parse(&args.granularity)
        .ok_or_else(|| anyhow!("unknown granularity `{}`", args.granularity))
        .or_exit(Code::Input)?;
    let faulty = args
        .faulty
        .iter()
        .map(|s| inputs::cell(s))
        .collect::<Result<BTreeSet<Coord>, _>>()?;
    if let Some(c) = faulty.iter().find(|c| d.arch.cell(**c).is_none()) {
        return Err(Failure::new(Code::Input, anyhow!("faulty cell {c} is not a functional unit")));
    }
    let mut policy = SparePolicy::new();
    for s in &args.spares {
        let (kind, n) = inputs::spare(s)?;
        policy.insert(kind, n);
    }
    run.param("granularity", &args.granularity);
    run.param("precompiled", args.precompiled);
    run.param("faulty", join(&faulty, " "));
    run.param("spares", join(policy.iter().map(|(k, n)| format!("{k}:{n}")), ","));
    check_policy(&d.design, &d.arch, &policy).map_err(exit::repair)?;

    let primary = compile(&d.design, &d.arch, seed, &BTreeSet::new()).map_err(exit::pnr)?;
    let plan: Option<RepairPlan> = if args.precompiled > 0 {
        let plan = precompile(&d.design, &d.arch, &policy, args.precompiled, granularity, seed).map_err(exit::repair)?;
        let entries: Vec<PlanEntry> = plan
            .configs
            .iter()
            .enumerate()
            .map(|(i, p)| PlanEntry {
                excluded: &p.excluded,
                used: &p.used,
                changed_frames: &p.changed_frames,
                reconfiguration_cycles: p.reconfiguration_cycles,
                file: format!("precompiled_{i}.rovb"),
            })
            .collect();
        for (i, p) in plan.configs.iter().enumerate() {
            run.write_bytes(&format!("precompiled_{i}.rovb"), &p.bitstream.to_bytes()).map_err(io_err)?;
        }
        println!(
            "{} precompiled configurations, coverage {:.1}% of {} used cells",
            plan.configs.len(),
            100.0 * plan.coverage(),
            plan.used.len()
        );
        let body = json!({
            "granularity": plan.granularity,
            "used": plan.used,
            "spares": plan.spares,
            "coverage": plan.coverage(),
            "configs": entries,
        });
        run.write_json("plan.json", &body).map_err(io_err)?;
        Some(plan)
    } else {
        None
    };

    if !faulty.is_empty() {
        let single = (faulty.len() == 1).then(|| *faulty.iter().next().unwrap());
        let pre = plan
            .as_ref()
            .zip(single)
            .and_then(|(p, c)| precompiled_repair(p, &primary.bitstream, c));
        let (method, bitstream, latency, used) = match pre {
            Some((p, lat)) => ("precompiled", p.bitstream.clone(), lat, p.used.clone()),
            None => {
                let r = dynamic_repair(&d.design, &d.arch, &primary.bitstream, &faulty, granularity, seed)
                    .map_err(exit::repair)?;
                let used = r.compiled.placement.used();
                ("dynamic", r.compiled.bitstream, r.latency, used)
            }
        };
        println!(
            "{method} repair: {} compile work, {} reconfiguration cycles",
            latency.compile_work, latency.reconfiguration_cycles
        );
        run.write_bytes("repaired.rovb", &bitstream.to_bytes()).map_err(io_err)?;
        let body = json!({
            "faulty": faulty,
            "method": method,
            "latency": latency,
            "total_latency": latency.total(),
            "used": used,
            "changed_frames": primary.bitstream.changed_frames(&bitstream),
        });
        run.write_json("repair.json", &body).map_err(io_err)?;
    }
    run.finish().map_err(io_err)
}
