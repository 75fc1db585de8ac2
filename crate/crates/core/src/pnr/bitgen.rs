//! Translation of a placed and routed design into configuration bits.

use super::{Driver, Netlist, Placement, Routing, Sink};
use crate::arch::{bit_layout, encode_config, opcode, Bitstream, FabricArch, FabricConfig, FuVariant, Pin};
use crate::harden::HardenedDesign;

/// Sets opcodes (every replica copy), checker enables, connection-box
/// selects and switch-box connections; everything else stays zero.
pub fn generate_config(
    design: &HardenedDesign,
    netlist: &Netlist,
    placement: &Placement,
    routing: &Routing,
    arch: &FabricArch,
) -> FabricConfig {
    let w = arch.channel_width();
    let mut config = bit_layout(arch).blank();
    for (i, node) in design.dfg.nodes.iter().enumerate() {
        let at = placement.sites[i];
        let cell = arch.cell(at).expect("placed on a functional unit");
        let cc = config.cell_mut(arch, at).unwrap();
        cc.opcodes.iter_mut().for_each(|o| *o = opcode(node.op));
        if cell.variant == FuVariant::Edc {
            cc.checker = 0b11;
        }
    }
    for tree in &routing.trees {
        let net = &netlist.nets[tree.net];
        if let Driver::Node(i) = net.driver {
            let at = placement.sites[i];
            let cell = arch.cell(at).unwrap();
            config
                .cell_mut(arch, at)
                .unwrap()
                .set_pin(cell, Pin::Out, (tree.source % w) as u32);
        }
        for (sink, &node) in net.sinks.iter().zip(&tree.sinks) {
            if let Sink::Pin { node: n, pin } = *sink {
                let at = placement.sites[n];
                let cell = arch.cell(at).unwrap();
                config
                    .cell_mut(arch, at)
                    .unwrap()
                    .set_pin(cell, Pin::In(pin), (node % w) as u32);
            }
        }
        for &(_, _, sw) in &tree.edges {
            let pair = sw % 6;
            let slot = sw / 6;
            config.switches[slot] |= 1 << pair;
        }
    }
    config
}

pub fn generate_bitstream(
    design: &HardenedDesign,
    netlist: &Netlist,
    placement: &Placement,
    routing: &Routing,
    arch: &FabricArch,
) -> Bitstream {
    let config = generate_config(design, netlist, placement, routing, arch);
    encode_config(&bit_layout(arch), &config)
}
