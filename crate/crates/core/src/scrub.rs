//! Two-level configuration scrubbing.
//!
//! The scrubber blindly reads every frame, checks each 64-bit word against
//! its SECDED code and writes back frames holding a single-bit error. A word
//! with two or more flipped bits cannot be corrected and triggers a full
//! reconfiguration of that level. The upper level is the overlay
//! configuration memory; the lower level is the device memory of a
//! [`DeviceModel`]. The two levels are scrubbed independently.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Bitstream, BitstreamLayout};
use crate::secded::{self, Syndrome};
use crate::seu::{DeviceModel, ResourceUsage};

pub const DEFAULT_FRAME_COST: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Upper,
    Lower,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Upper => "upper",
            Level::Lower => "lower",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "upper" => Some(Level::Upper),
            "lower" => Some(Level::Lower),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Levels {
    Upper,
    Lower,
    Both,
}

impl Levels {
    pub fn includes(self, level: Level) -> bool {
        matches!(
            (self, level),
            (Levels::Both, _) | (Levels::Upper, Level::Upper) | (Levels::Lower, Level::Lower)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    RoundRobin,
    /// Frames holding resources of the mapped design first.
    Priority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubConfig {
    pub levels: Levels,
    pub schedule: Schedule,
    /// Cycles to read and check one frame.
    pub t_f: u64,
    /// Cycles to write back one frame.
    pub t_w: u64,
    /// Cycles between pass starts; `None` scrubs back to back.
    pub period: Option<u64>,
}

impl Default for ScrubConfig {
    fn default() -> Self {
        ScrubConfig {
            levels: Levels::Both,
            schedule: Schedule::RoundRobin,
            t_f: DEFAULT_FRAME_COST,
            t_w: DEFAULT_FRAME_COST,
            period: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScrubError {
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("trace event {index} at cycle {cycle} precedes the previous event")]
    Unordered { index: usize, cycle: u64 },
    #[error("trace event {index}: {level} bit {bit} outside the {total}-bit memory")]
    OutOfRange { index: usize, level: &'static str, bit: usize, total: usize },
}

impl ScrubConfig {
    pub fn validate(&self) -> Result<(), ScrubError> {
        if self.t_f == 0 {
            return Err(ScrubError::Zero("t_f"));
        }
        if self.t_w == 0 {
            return Err(ScrubError::Zero("t_w"));
        }
        if self.period == Some(0) {
            return Err(ScrubError::Zero("period"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upset {
    pub cycle: u64,
    pub level: Level,
    pub bit_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsetTrace {
    pub events: Vec<Upset>,
}

impl UpsetTrace {
    pub fn validate(&self) -> Result<(), ScrubError> {
        for (i, w) in self.events.windows(2).enumerate() {
            if w[1].cycle < w[0].cycle {
                return Err(ScrubError::Unordered {
                    index: i + 1,
                    cycle: w[1].cycle,
                });
            }
        }
        Ok(())
    }

    /// `count` single-bit upsets at uniformly random cycles in `[0, span)`
    /// and uniformly random bits of `level`.
    pub fn random(count: usize, level: Level, bits: usize, span: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<Upset> = (0..count)
            .map(|_| Upset {
                cycle: rng.gen_range(0..span.max(1)),
                level,
                bit_index: rng.gen_range(0..bits),
            })
            .collect();
        events.sort_by_key(|e| e.cycle);
        UpsetTrace { events }
    }
}

/// Word-addressed view of one memory level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryGeometry {
    /// Payload bits per frame.
    pub frame_bits: Vec<usize>,
    /// (frame, offset) of every addressable bit.
    pub bits: Vec<(usize, usize)>,
    /// Frames holding resources of the mapped design.
    pub essential: BTreeSet<usize>,
}

impl MemoryGeometry {
    pub fn overlay(layout: &BitstreamLayout, usage: &ResourceUsage) -> Self {
        let bits = (0..layout.total_bits())
            .map(|i| {
                let b = layout.bit(i);
                (b.frame, b.offset)
            })
            .collect();
        let essential = layout
            .fields()
            .iter()
            .filter(|f| {
                usage.cells.contains(&f.coord) || (f.start..f.start + f.width as usize).any(|b| usage.routing_bits.contains(&b))
            })
            .map(|f| f.frame)
            .collect();
        MemoryGeometry {
            frame_bits: layout.frames().iter().map(|f| f.bits).collect(),
            bits,
            essential,
        }
    }

    pub fn device(model: &DeviceModel) -> Self {
        MemoryGeometry {
            frame_bits: model.frame_bits.clone(),
            bits: model.bits.iter().map(|b| (b.frame, b.offset)).collect(),
            essential: model.essential_frames(),
        }
    }

    pub fn frames(&self) -> usize {
        self.frame_bits.len()
    }

    pub fn order(&self, schedule: Schedule) -> Vec<usize> {
        let all = 0..self.frames();
        match schedule {
            Schedule::RoundRobin => all.collect(),
            Schedule::Priority => {
                let mut v: Vec<usize> = self.essential.iter().copied().collect();
                v.extend(all.filter(|f| !self.essential.contains(f)));
                v
            }
        }
    }

    /// Duration of a pass that finds nothing.
    pub fn clean_pass(&self, cfg: &ScrubConfig) -> u64 {
        self.frames() as u64 * cfg.t_f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub cycle: u64,
    pub level: Level,
    pub bit_index: usize,
    pub frame: usize,
    pub detected: Option<u64>,
    pub corrected: Option<u64>,
    /// Found in a word with two or more flipped bits.
    pub uncorrectable: bool,
    /// Repaired by a full reconfiguration rather than a frame write-back.
    pub by_reconfiguration: bool,
    /// Index of the pass that resolved the event.
    pub pass: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub index: u64,
    pub start: u64,
    pub end: u64,
    pub corrections: usize,
    pub uncorrectable: usize,
    pub reconfigured: bool,
}

impl PassRecord {
    pub fn duration(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub frames: usize,
    pub clean_pass_duration: u64,
    pub passes: u64,
    pub events: usize,
    pub corrected: usize,
    pub uncorrectable: usize,
    pub reconfigurations: usize,
    pub mean_detection_latency: Option<f64>,
    pub max_detection_latency: Option<u64>,
    pub mean_correction_latency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrubReport {
    pub config: ScrubConfig,
    pub events: Vec<EventRecord>,
    /// Passes that found something.
    pub passes: BTreeMap<Level, Vec<PassRecord>>,
    pub levels: BTreeMap<Level, LevelSummary>,
}

impl ScrubReport {
    pub fn level(&self, level: Level) -> Option<&LevelSummary> {
        self.levels.get(&level)
    }

    /// The recorded pass of `level` with index `pass`.
    pub fn pass_containing(&self, level: Level, pass: u64) -> Option<&PassRecord> {
        self.passes.get(&level)?.iter().find(|p| p.index == pass)
    }
}

/// Scrubs both levels of `trace`.
pub fn run_two_level(
    overlay: &MemoryGeometry,
    device: &MemoryGeometry,
    trace: &UpsetTrace,
    cfg: &ScrubConfig,
) -> Result<ScrubReport, ScrubError> {
    cfg.validate()?;
    trace.validate()?;
    for (i, e) in trace.events.iter().enumerate() {
        let total = match e.level {
            Level::Upper => overlay.bits.len(),
            Level::Lower => device.bits.len(),
        };
        if e.bit_index >= total {
            return Err(ScrubError::OutOfRange {
                index: i,
                level: e.level.name(),
                bit: e.bit_index,
                total,
            });
        }
    }
    let mut events: Vec<EventRecord> = trace
        .events
        .iter()
        .map(|e| {
            let geo = if e.level == Level::Upper { overlay } else { device };
            EventRecord {
                cycle: e.cycle,
                level: e.level,
                bit_index: e.bit_index,
                frame: geo.bits[e.bit_index].0,
                detected: None,
                corrected: None,
                uncorrectable: false,
                by_reconfiguration: false,
                pass: None,
            }
        })
        .collect();
    let mut passes = BTreeMap::new();
    let mut levels = BTreeMap::new();
    for (level, geo) in [(Level::Upper, overlay), (Level::Lower, device)] {
        if !cfg.levels.includes(level) {
            continue;
        }
        let ids: Vec<usize> = (0..events.len()).filter(|&i| events[i].level == level).collect();
        let (records, count) = scrub_level(geo, &ids, &mut events, cfg);
        levels.insert(level, summarize(geo, cfg, &ids, &events, &records, count));
        passes.insert(level, records);
    }
    Ok(ScrubReport {
        config: *cfg,
        events,
        passes,
        levels,
    })
}

/// Discrete-event scrubbing of one level. Returns the active passes and the
/// total pass count.
fn scrub_level(geo: &MemoryGeometry, ids: &[usize], events: &mut [EventRecord], cfg: &ScrubConfig) -> (Vec<PassRecord>, u64) {
    let order = geo.order(cfg.schedule);
    let clean = geo.clean_pass(cfg);
    let spacing = cfg.period.unwrap_or(clean).max(clean).max(1);
    // (frame, word) -> flipped offsets within the word -> event id.
    let mut alive: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    let mut next = 0usize;
    let mut start = 0u64;
    let mut index = 0u64;
    let mut records = Vec::new();
    while next < ids.len() || !alive.is_empty() {
        if alive.is_empty() {
            // Skip passes that cannot see anything.
            let arrival = events[ids[next]].cycle;
            if arrival > start + clean {
                let skip = (arrival - start) / spacing;
                start += skip * spacing;
                index += skip;
            }
        }
        let mut t = start;
        let mut rec = PassRecord {
            index,
            start,
            end: start,
            corrections: 0,
            uncorrectable: 0,
            reconfigured: false,
        };
        for &frame in &order {
            while next < ids.len() && events[ids[next]].cycle <= t {
                let id = ids[next];
                let (f, off) = geo.bits[events[id].bit_index];
                let word = alive.entry((f, off / 64)).or_default();
                // A second hit on the same bit restores it.
                if let Some(prev) = word.remove(&(off % 64)) {
                    for e in [prev, id] {
                        events[e].detected = Some(events[id].cycle);
                        events[e].corrected = Some(events[id].cycle);
                    }
                } else {
                    word.insert(off % 64, id);
                }
                if word.is_empty() {
                    alive.remove(&(f, off / 64));
                }
                next += 1;
            }
            let words: Vec<(usize, usize)> = alive.range((frame, 0)..(frame + 1, 0)).map(|(k, _)| *k).collect();
            let seen = t + cfg.t_f;
            let multi: BTreeSet<(usize, usize)> = words.iter().filter(|k| alive[k].len() >= 2).copied().collect();
            if !multi.is_empty() {
                // Full reconfiguration of the level clears every upset.
                let done = seen + geo.frames() as u64 * cfg.t_w;
                for (k, bits) in std::mem::take(&mut alive) {
                    for id in bits.into_values() {
                        let e = &mut events[id];
                        e.detected = Some(seen);
                        e.by_reconfiguration = true;
                        e.pass = Some(index);
                        if multi.contains(&k) {
                            e.uncorrectable = true;
                            rec.uncorrectable += 1;
                        } else {
                            e.corrected = Some(done);
                        }
                    }
                }
                rec.reconfigured = true;
                t = done;
                break;
            }
            t = seen;
            if !words.is_empty() {
                t += cfg.t_w;
                for k in words {
                    for id in alive.remove(&k).unwrap().into_values() {
                        let e = &mut events[id];
                        e.detected = Some(seen);
                        e.corrected = Some(t);
                        e.pass = Some(index);
                        rec.corrections += 1;
                    }
                }
            }
        }
        rec.end = t;
        if rec.corrections > 0 || rec.reconfigured {
            records.push(rec);
        }
        index += 1;
        start = match cfg.period {
            Some(p) => (start + p).max(t),
            None => t,
        };
    }
    (records, index)
}

fn summarize(
    geo: &MemoryGeometry,
    cfg: &ScrubConfig,
    ids: &[usize],
    events: &[EventRecord],
    records: &[PassRecord],
    passes: u64,
) -> LevelSummary {
    let det: Vec<u64> = ids.iter().filter_map(|&i| events[i].detected.map(|d| d - events[i].cycle)).collect();
    let cor: Vec<u64> = ids.iter().filter_map(|&i| events[i].corrected.map(|c| c - events[i].cycle)).collect();
    let mean = |v: &[u64]| (!v.is_empty()).then(|| v.iter().sum::<u64>() as f64 / v.len() as f64);
    LevelSummary {
        frames: geo.frames(),
        clean_pass_duration: geo.clean_pass(cfg),
        passes,
        events: ids.len(),
        corrected: ids.iter().filter(|&&i| events[i].corrected.is_some() && !events[i].uncorrectable).count(),
        uncorrectable: ids.iter().filter(|&&i| events[i].uncorrectable).count(),
        reconfigurations: records.iter().filter(|r| r.reconfigured).count(),
        mean_detection_latency: mean(&det),
        max_detection_latency: det.iter().copied().max(),
        mean_correction_latency: mean(&cor),
    }
}

/// Outcome of one scrub pass over a real bitstream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFragment {
    pub duration: u64,
    /// (frame, word) of corrected single-bit errors, in visit order.
    pub corrected: Vec<(usize, usize)>,
    /// (frame, word) of words with an uncorrectable syndrome.
    pub uncorrectable: Vec<(usize, usize)>,
    /// A full reconfiguration is required.
    pub reconfigure: bool,
}

/// One blind pass over `bitstream` in `order`, correcting single-bit errors
/// in place with the stored SECDED codes.
pub fn scrub_pass(bitstream: &mut Bitstream, order: &[usize], cfg: &ScrubConfig) -> PassFragment {
    let mut out = PassFragment::default();
    for &f in order {
        out.duration += cfg.t_f;
        let frame = &mut bitstream.frames[f];
        let mut rewrite = false;
        for w in 0..frame.words.len() {
            match secded::check(frame.words[w], frame.check[w]) {
                Syndrome::Clean => {}
                Syndrome::Uncorrectable => out.uncorrectable.push((f, w)),
                _ => {
                    secded::correct(&mut frame.words[w], &mut frame.check[w]);
                    out.corrected.push((f, w));
                    rewrite = true;
                }
            }
        }
        if rewrite {
            out.duration += cfg.t_w;
        }
    }
    out.reconfigure = !out.uncorrectable.is_empty();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{bit_layout, FabricMode};
    use crate::dfg::gen_conv;
    use crate::harden::{assign_hardening, minimal_fabric, size_requirements, HardeningMode};
    use crate::pnr::{compile, Compiled};
    use crate::seu::{build_device_model, inject, DEFAULT_FRAME_FACTOR};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn design() -> Compiled {
        let dfg = gen_conv(2);
        let mode = HardeningMode::TmrFu;
        let req = size_requirements(std::slice::from_ref(&dfg), &mode).unwrap();
        let arch = minimal_fabric(&req.scaled(2), FabricMode::TmrFu, 6, dfg.width, 2).unwrap();
        compile(&assign_hardening(&dfg, &mode).unwrap(), &arch, 0, &Default::default()).unwrap()
    }

    fn geometries(c: &Compiled) -> (MemoryGeometry, MemoryGeometry) {
        let usage = ResourceUsage::from_compiled(c);
        let model = build_device_model(&c.arch, &usage, DEFAULT_FRAME_FACTOR);
        (MemoryGeometry::overlay(&c.layout, &usage), MemoryGeometry::device(&model))
    }

    fn upper_bit_in_frame(c: &Compiled, frame: usize) -> usize {
        (0..c.layout.total_bits()).find(|&i| c.layout.bit(i).frame == frame).unwrap()
    }

    #[test]
    fn single_flip_in_frame_two_is_corrected() {
        let c = design();
        let bit = upper_bit_in_frame(&c, 2);
        let mut bs = inject(&c.bitstream, &c.layout, &[bit]).unwrap();
        let cfg = ScrubConfig::default();
        let order: Vec<usize> = (0..bs.frames.len()).collect();
        let frag = scrub_pass(&mut bs, &order, &cfg);
        assert_eq!(frag.corrected.len(), 1);
        assert_eq!(frag.corrected[0].0, 2);
        assert!(!frag.reconfigure);
        assert_eq!(bs, c.bitstream);
        assert_eq!(frag.duration, order.len() as u64 * cfg.t_f + cfg.t_w);
    }

    #[test]
    fn double_flip_in_word_needs_reconfiguration() {
        let c = design();
        let b = upper_bit_in_frame(&c, 0);
        let mut bs = inject(&c.bitstream, &c.layout, &[b, b + 1]).unwrap();
        let order: Vec<usize> = (0..bs.frames.len()).collect();
        let frag = scrub_pass(&mut bs, &order, &ScrubConfig::default());
        assert_eq!(frag.uncorrectable, vec![(0, 0)]);
        assert!(frag.reconfigure);

        let (up, dev) = geometries(&c);
        let trace = UpsetTrace {
            events: vec![
                Upset { cycle: 10, level: Level::Upper, bit_index: b },
                Upset { cycle: 11, level: Level::Upper, bit_index: b + 1 },
            ],
        };
        let r = run_two_level(&up, &dev, &trace, &ScrubConfig::default()).unwrap();
        assert!(r.events.iter().all(|e| e.uncorrectable && e.corrected.is_none()));
        assert_eq!(r.level(Level::Upper).unwrap().reconfigurations, 1);
    }

    #[test]
    fn clean_memory_is_untouched() {
        let c = design();
        let mut bs = c.bitstream.clone();
        let order: Vec<usize> = (0..bs.frames.len()).collect();
        let cfg = ScrubConfig::default();
        let frag = scrub_pass(&mut bs, &order, &cfg);
        assert_eq!(frag.duration, bs.frames.len() as u64 * cfg.t_f);
        assert!(frag.corrected.is_empty() && frag.uncorrectable.is_empty());
        assert_eq!(bs, c.bitstream);
    }

    #[test]
    fn lower_pass_is_ten_times_longer() {
        let c = design();
        let usage = ResourceUsage::from_compiled(&c);
        let model = build_device_model(&c.arch, &usage, DEFAULT_FRAME_FACTOR);
        let (up, dev) = (MemoryGeometry::overlay(&c.layout, &usage), MemoryGeometry::device(&model));
        let cfg = ScrubConfig::default();
        assert_eq!(dev.frames(), 10 * up.frames());
        assert_eq!(dev.clean_pass(&cfg), 10 * up.clean_pass(&cfg));
        // The same overlay bits upset at both levels at the same cycles.
        let upper = UpsetTrace::random(200, Level::Upper, up.bits.len(), 2_000_000, 5);
        let mut events = upper.events.clone();
        events.extend(upper.events.iter().map(|e| Upset {
            level: Level::Lower,
            bit_index: model.overlay_map[e.bit_index],
            ..*e
        }));
        events.sort_by_key(|e| e.cycle);
        let r = run_two_level(&up, &dev, &UpsetTrace { events }, &cfg).unwrap();
        let (u, l) = (r.level(Level::Upper).unwrap(), r.level(Level::Lower).unwrap());
        assert!(u.mean_detection_latency.unwrap() < l.mean_detection_latency.unwrap());
    }

    #[test]
    fn single_upsets_are_fixed_within_the_next_pass() {
        let c = design();
        let (up, dev) = geometries(&c);
        for period in [None, Some(5_000)] {
            let cfg = ScrubConfig { period, ..ScrubConfig::default() };
            let trace = UpsetTrace::random(100, Level::Upper, up.bits.len(), 1_000_000, 11);
            let r = run_two_level(&up, &dev, &trace, &cfg).unwrap();
            let spacing = period.unwrap_or(0).max(up.clean_pass(&cfg));
            let longest = r.passes[&Level::Upper].iter().map(PassRecord::duration).max().unwrap().max(spacing);
            for e in &r.events {
                assert!(!e.uncorrectable);
                let (d, k) = (e.detected.unwrap(), e.corrected.unwrap());
                assert!(e.cycle <= d && d <= k);
                // Corrected by the end of the pass in progress at arrival or
                // the one after it.
                let pass = r.pass_containing(Level::Upper, e.pass.unwrap()).unwrap();
                assert!(k <= pass.end);
                assert!(pass.start <= e.cycle + longest, "{e:?} {pass:?}");
            }
        }
    }

    fn essential_trace(geo: &MemoryGeometry, level: Level, seed: u64) -> UpsetTrace {
        let pool: Vec<usize> = (0..geo.bits.len()).filter(|&b| geo.essential.contains(&geo.bits[b].0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<Upset> = (0..100)
            .map(|_| Upset {
                cycle: rng.gen_range(0..5_000_000),
                level,
                bit_index: pool[rng.gen_range(0..pool.len())],
            })
            .collect();
        events.sort_by_key(|e| e.cycle);
        UpsetTrace { events }
    }

    #[test]
    fn priority_helps_essential_frames() {
        let c = design();
        let (up, dev) = geometries(&c);
        assert!(!dev.essential.is_empty() && dev.essential.len() < dev.frames());
        for (level, levels, geo, period) in [
            (Level::Upper, Levels::Upper, &up, 4_000),
            (Level::Lower, Levels::Lower, &dev, 40_000),
        ] {
            let trace = essential_trace(geo, level, 2);
            let mean = |schedule| {
                let cfg = ScrubConfig { schedule, period: Some(period), levels, ..ScrubConfig::default() };
                let r = run_two_level(&up, &dev, &trace, &cfg).unwrap();
                r.level(level).unwrap().mean_detection_latency.unwrap()
            };
            assert!(mean(Schedule::Priority) <= mean(Schedule::RoundRobin), "{level:?}");
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let c = design();
        let (up, dev) = geometries(&c);
        let cfg = ScrubConfig { t_f: 0, ..ScrubConfig::default() };
        assert_eq!(run_two_level(&up, &dev, &UpsetTrace::default(), &cfg), Err(ScrubError::Zero("t_f")));
        let trace = UpsetTrace {
            events: vec![Upset { cycle: 0, level: Level::Upper, bit_index: up.bits.len() }],
        };
        assert!(matches!(
            run_two_level(&up, &dev, &trace, &ScrubConfig::default()),
            Err(ScrubError::OutOfRange { .. })
        ));
        let trace = UpsetTrace {
            events: vec![
                Upset { cycle: 5, level: Level::Upper, bit_index: 0 },
                Upset { cycle: 4, level: Level::Upper, bit_index: 0 },
            ],
        };
        assert!(matches!(
            run_two_level(&up, &dev, &trace, &ScrubConfig::default()),
            Err(ScrubError::Unordered { .. })
        ));
        assert_eq!(bit_layout(&c.arch), c.layout);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn event_times_are_ordered(seed in any::<u64>(), n in 1usize..60, period in proptest::option::of(1u64..3_000)) {
            let c = design();
            let (up, dev) = geometries(&c);
            let cfg = ScrubConfig { period, ..ScrubConfig::default() };
            let mut trace = UpsetTrace::random(n, Level::Upper, up.bits.len(), 50_000, seed);
            trace.events.extend(UpsetTrace::random(n, Level::Lower, dev.bits.len(), 50_000, seed ^ 1).events);
            trace.events.sort_by_key(|e| e.cycle);
            let r = run_two_level(&up, &dev, &trace, &cfg).unwrap();
            for e in &r.events {
                let d = e.detected.unwrap();
                prop_assert!(e.cycle <= d);
                if let Some(k) = e.corrected {
                    prop_assert!(d <= k);
                }
            }
        }

        #[test]
        fn uncorrectable_iff_shared_word(offsets in proptest::collection::btree_set(0usize..64, 1..4)) {
            let c = design();
            let (up, dev) = geometries(&c);
            let base = upper_bit_in_frame(&c, 1);
            let events = offsets
                .iter()
                .filter(|&&o| up.bits.get(base + o).is_some_and(|b| b.0 == 1 && b.1 < 64))
                .map(|&o| Upset { cycle: 0, level: Level::Upper, bit_index: base + o })
                .collect::<Vec<_>>();
            let n = events.len();
            let r = run_two_level(&up, &dev, &UpsetTrace { events }, &ScrubConfig::default()).unwrap();
            for e in &r.events {
                prop_assert_eq!(e.uncorrectable, n >= 2);
            }
        }
    }
}
