use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use relic_core::arch::{bit_layout, Bitstream};
use relic_core::dfg::builtin;
use relic_core::harden::{assign_hardening, minimal_fabric, size_requirements, HardeningMode};
use relic_core::scrub::{Level, Upset, UpsetTrace};
use relic_core::{parse_dfg, parse_fabric, Coord, DataflowGraph, FabricArch, HardenedDesign, Op};

use crate::exit::{Code, Failure, OrExit};
use crate::manifest::Run;
use crate::DesignArgs;

/// Reads a kernel file, falling back to the built-in generators. The
/// kernel's canonical text is recorded as a run input.
pub fn kernel(name: &str, run: &mut Run) -> Result<DataflowGraph, Failure> {
    let path = Path::new(name);
    let dfg = if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {name}")).or_exit(Code::Input)?;
        parse_dfg(&text)
            .map_err(|e| anyhow!("{name}: {e}"))
            .or_exit(Code::Input)?
    } else {
        builtin(name)
            .ok_or_else(|| anyhow!("`{name}` is neither a kernel file nor a built-in kernel"))
            .or_exit(Code::Input)?
    };
    run.input(format!("kernel:{}", dfg.name), dfg.to_text().as_bytes());
    Ok(dfg)
}

pub fn mode(s: &str) -> Result<HardeningMode, Failure> {
    HardeningMode::parse(s)
        .ok_or_else(|| anyhow!("unknown hardening mode `{s}`"))
        .or_exit(Code::Input)
}

pub struct Design {
    pub design: HardenedDesign,
    pub arch: FabricArch,
}

pub fn design(args: &DesignArgs, run: &mut Run) -> Result<Design, Failure> {
    let dfg = kernel(&args.kernel, run)?;
    let mode = mode(&args.mode)?;
    let design = assign_hardening(&dfg, &mode).or_exit(Code::Input)?;
    run.param("mode", mode.name());
    let arch = match &args.fabric {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .or_exit(Code::Input)?;
            run.input("fabric", text.as_bytes());
            parse_fabric(&text)
                .map_err(|e| anyhow!("{}: {e}", path.display()))
                .or_exit(Code::Input)?
        }
        None => {
            run.param("scale", args.scale);
            run.param("channel_width", args.channel_width);
            run.param("separation", args.separation);
            let req = size_requirements(std::slice::from_ref(&dfg), &mode).or_exit(Code::Input)?;
            minimal_fabric(
                &req.scaled(args.scale.max(1)),
                mode.fabric_mode(),
                args.channel_width,
                dfg.width,
                args.separation,
            )
            .or_exit(Code::Input)?
        }
    };
    Ok(Design { design, arch })
}

pub fn bitstream(path: &Path, arch: &FabricArch, run: &mut Run) -> Result<Bitstream, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(Code::Input)?;
    run.input("bitstream", &bytes);
    Bitstream::from_bytes(&bit_layout(arch), &bytes)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
        .or_exit(Code::Input)
}

/// `fu:<row>,<col>`.
pub fn cell(s: &str) -> Result<Coord, Failure> {
    let parse = || -> anyhow::Result<Coord> {
        let rest = s.strip_prefix("fu:").ok_or_else(|| anyhow!("expected fu:<row>,<col>"))?;
        let (r, c) = rest.split_once(',').ok_or_else(|| anyhow!("expected fu:<row>,<col>"))?;
        Ok(Coord::new(r.trim().parse()?, c.trim().parse()?))
    };
    parse().with_context(|| format!("bad cell `{s}`")).or_exit(Code::Input)
}

/// `<kind>:<n>`.
pub fn spare(s: &str) -> Result<(Op, usize), Failure> {
    let parse = || -> anyhow::Result<(Op, usize)> {
        let (k, n) = s.split_once(':').ok_or_else(|| anyhow!("expected <kind>:<n>"))?;
        let kind: Op = k.parse().map_err(|e: String| anyhow!(e))?;
        Ok((kind, n.parse()?))
    };
    parse().with_context(|| format!("bad spare policy `{s}`")).or_exit(Code::Input)
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes)
}

/// Vector CSV: one row per vector, columns in input-port order. A first row
/// that is not numeric is taken as a header.
pub fn vectors(path: &Path, dfg: &DataflowGraph, run: &mut Run) -> Result<Vec<Vec<u64>>, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(Code::Input)?;
    run.input("vectors", &bytes);
    let parse = || -> anyhow::Result<Vec<Vec<u64>>> {
        let mut out = Vec::new();
        for (i, rec) in csv_reader(&bytes).records().enumerate() {
            let rec = rec?;
            let row: Result<Vec<u64>, _> = rec.iter().map(parse_word).collect();
            match row {
                Ok(row) => {
                    if row.len() != dfg.inputs.len() {
                        bail!("row {} has {} values, kernel has {} inputs", i + 1, row.len(), dfg.inputs.len());
                    }
                    out.push(row.into_iter().map(|v| dfg.width.truncate(v)).collect());
                }
                Err(_) if i == 0 => continue,
                Err(e) => bail!("row {}: {e}", i + 1),
            }
        }
        Ok(out)
    };
    parse().with_context(|| path.display().to_string()).or_exit(Code::Input)
}

fn parse_word(s: &str) -> anyhow::Result<u64> {
    if let Some(hex) = s.strip_prefix("0x") {
        return Ok(u64::from_str_radix(hex, 16)?);
    }
    if s.starts_with('-') {
        return Ok(s.parse::<i64>()? as u64);
    }
    Ok(s.parse()?)
}

/// Upset trace CSV: `cycle,level,bit_index`, optional header.
pub fn trace(path: &Path, run: &mut Run) -> Result<UpsetTrace, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(Code::Input)?;
    run.input("upsets", &bytes);
    let parse = || -> anyhow::Result<UpsetTrace> {
        let mut events = Vec::new();
        for (i, rec) in csv_reader(&bytes).records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                bail!("row {}: expected cycle,level,bit_index", i + 1);
            }
            let cycle = match rec[0].parse::<u64>() {
                Ok(c) => c,
                Err(_) if i == 0 => continue,
                Err(e) => bail!("row {}: {e}", i + 1),
            };
            let level = Level::parse(&rec[1]).ok_or_else(|| anyhow!("row {}: level must be upper or lower", i + 1))?;
            events.push(Upset {
                cycle,
                level,
                bit_index: rec[2].parse()?,
            });
        }
        Ok(UpsetTrace { events })
    };
    parse().with_context(|| path.display().to_string()).or_exit(Code::Input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_and_spare_syntax() {
        assert_eq!(cell("fu:1,2").unwrap(), Coord::new(1, 2));
        assert!(cell("1,2").is_err());
        assert_eq!(spare("mul:3").unwrap(), (Op::Mul, 3));
        assert!(spare("mul").is_err());
    }

    #[test]
    fn words_accept_hex_and_negatives() {
        assert_eq!(parse_word("0x10").unwrap(), 16);
        assert_eq!(parse_word("-1").unwrap(), u64::MAX);
        assert_eq!(parse_word("7").unwrap(), 7);
    }
}
