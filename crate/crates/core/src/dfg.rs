//! Kernel intermediate representation.
//!
//! A [`DataflowGraph`] is a DAG of word-level arithmetic nodes. It doubles as
//! the golden model: [`eval_dfg`] defines the arithmetic every fabric
//! simulation is checked against.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::word::{majority, Width};

/// Word-level operation. The same set names the functional-unit kinds of the
/// fabric (see [`crate::arch::FuKind`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Mul,
    Add,
    Sub,
    #[serde(rename = "subabs")]
    SubAbs,
    Vote,
}

impl Op {
    pub const ALL: [Op; 5] = [Op::Mul, Op::Add, Op::Sub, Op::SubAbs, Op::Vote];

    pub fn arity(self) -> usize {
        match self {
            Op::Vote => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Mul => "mul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::SubAbs => "subabs",
            Op::Vote => "vote",
        }
    }

    /// Applies the operation with wrap-around semantics.
    ///
    /// `subabs` is `|a - b|` of the wrapped difference, so `|MIN| = MIN`.
    pub fn apply(self, width: Width, args: &[u64]) -> u64 {
        match self {
            Op::Mul => width.truncate(args[0].wrapping_mul(args[1])),
            Op::Add => width.truncate(args[0].wrapping_add(args[1])),
            Op::Sub => width.truncate(args[0].wrapping_sub(args[1])),
            Op::SubAbs => {
                let d = width.to_signed(args[0].wrapping_sub(args[1]));
                width.wrap(d.unsigned_abs() as i128)
            }
            Op::Vote => majority(args[0], args[1], args[2]) & width.mask(),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    #[default]
    High,
    Medium,
    Low,
}

impl FromStr for Criticality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(Criticality::High),
            "medium" => Ok(Criticality::Medium),
            "low" => Ok(Criticality::Low),
            _ => Err(format!("unknown criticality `{s}`")),
        }
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::High => "high",
            Criticality::Medium => "medium",
            Criticality::Low => "low",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    Input(usize),
    Node(usize),
    Const(i64),
}

/// Membership of a node in a triplicated group produced by naive TMR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaTag {
    /// Index of the original node the triple was made from.
    pub triple: usize,
    /// Replica domain, 0..3.
    pub domain: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub args: Vec<Operand>,
    pub criticality: Criticality,
    pub replica: Option<ReplicaTag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub name: String,
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataflowGraph {
    pub name: String,
    pub width: Width,
    pub inputs: Vec<String>,
    pub nodes: Vec<Node>,
    pub outputs: Vec<Output>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DfgError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: undefined operand `{name}`")]
    UndefinedOperand { line: usize, name: String },
    #[error("line {line}: duplicate definition of `{name}`")]
    Duplicate { line: usize, name: String },
    #[error("node `{node}`: `{op}` takes {expected} operands, got {got}")]
    Arity {
        node: String,
        op: Op,
        expected: usize,
        got: usize,
    },
    #[error("cycle through node `{node}`")]
    Cycle { node: String },
    #[error("node `{node}` refers to a node that is not defined before it")]
    NotTopological { node: String },
    #[error("expected {expected} input words, got {got}")]
    InputArity { expected: usize, got: usize },
}

impl DataflowGraph {
    pub fn new(name: impl Into<String>, width: Width) -> Self {
        DataflowGraph {
            name: name.into(),
            width,
            inputs: Vec::new(),
            nodes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, name: impl Into<String>) -> Operand {
        self.inputs.push(name.into());
        Operand::Input(self.inputs.len() - 1)
    }

    pub fn add_node(&mut self, name: impl Into<String>, op: Op, args: Vec<Operand>) -> Operand {
        self.nodes.push(Node {
            name: name.into(),
            op,
            args,
            criticality: Criticality::High,
            replica: None,
        });
        Operand::Node(self.nodes.len() - 1)
    }

    pub fn add_output(&mut self, name: impl Into<String>, node: usize) {
        self.outputs.push(Output {
            name: name.into(),
            node,
        });
    }

    /// Number of nodes with the given operation.
    pub fn count(&self, op: Op) -> usize {
        self.nodes.iter().filter(|n| n.op == op).count()
    }

    /// Checks arity and topological order.
    pub fn validate(&self) -> Result<(), DfgError> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.args.len() != node.op.arity() {
                return Err(DfgError::Arity {
                    node: node.name.clone(),
                    op: node.op,
                    expected: node.op.arity(),
                    got: node.args.len(),
                });
            }
            for arg in &node.args {
                match *arg {
                    Operand::Node(j) if j >= i => {
                        return Err(DfgError::NotTopological {
                            node: node.name.clone(),
                        })
                    }
                    Operand::Input(j) if j >= self.inputs.len() => {
                        return Err(DfgError::NotTopological {
                            node: node.name.clone(),
                        })
                    }
                    _ => {}
                }
            }
        }
        for out in &self.outputs {
            if out.node >= self.nodes.len() {
                return Err(DfgError::NotTopological {
                    node: out.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Longest path measured in nodes.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let d = node
                .args
                .iter()
                .filter_map(|a| match a {
                    Operand::Node(j) => Some(depth[*j]),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            depth[i] = d + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Serializes to the line-oriented kernel format accepted by [`parse_dfg`].
    pub fn to_text(&self) -> String {
        use fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "kernel {}", self.name);
        let _ = writeln!(s, "width {}", self.width);
        if !self.inputs.is_empty() {
            let _ = writeln!(s, "input {}", self.inputs.join(" "));
        }
        for node in &self.nodes {
            let _ = write!(s, "node {} = {}", node.name, node.op);
            for arg in &node.args {
                match *arg {
                    Operand::Input(i) => {
                        let _ = write!(s, " {}", self.inputs[i]);
                    }
                    Operand::Node(i) => {
                        let _ = write!(s, " {}", self.nodes[i].name);
                    }
                    Operand::Const(c) => {
                        let _ = write!(s, " {c}");
                    }
                }
            }
            s.push('\n');
        }
        for out in &self.outputs {
            let _ = writeln!(s, "output {} = {}", out.name, self.nodes[out.node].name);
        }
        for node in &self.nodes {
            if node.criticality != Criticality::High {
                let _ = writeln!(s, "criticality {} {}", node.name, node.criticality);
            }
        }
        s
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_const(s: &str) -> Option<i64> {
    if let Some(hex) = s.strip_prefix("0x") {
        return i64::from_str_radix(hex, 16).ok();
    }
    if let Some(hex) = s.strip_prefix("-0x") {
        return i64::from_str_radix(hex, 16).ok().map(|v| -v);
    }
    s.parse().ok()
}

struct RawNode {
    line: usize,
    name: String,
    op: Op,
    args: Vec<String>,
}

/// Parses a `.dfg` kernel description.
///
/// Nodes may be written in any order; the result is renumbered in a stable
/// topological order.
pub fn parse_dfg(text: &str) -> Result<DataflowGraph, DfgError> {
    let mut name = String::from("kernel");
    let mut width = Width::default();
    let mut inputs: Vec<String> = Vec::new();
    let mut raw: Vec<RawNode> = Vec::new();
    let mut outputs: Vec<(usize, String, String)> = Vec::new();
    let mut crits: Vec<(usize, String, Criticality)> = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();

    let syntax = |line: usize, msg: &str| DfgError::Syntax {
        line,
        msg: msg.to_string(),
    };

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "kernel" => {
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `kernel <name>`"));
                }
                name = toks[1].to_string();
            }
            "width" => {
                let w = toks
                    .get(1)
                    .and_then(|t| t.parse::<u32>().ok())
                    .filter(|_| toks.len() == 2)
                    .ok_or_else(|| syntax(line, "expected `width <n>`"))?;
                width = Width::new(w).ok_or_else(|| syntax(line, "width must be 8, 16 or 32"))?;
            }
            "input" => {
                if toks.len() < 2 {
                    return Err(syntax(line, "expected `input <id>...`"));
                }
                for t in &toks[1..] {
                    if !is_identifier(t) {
                        return Err(syntax(line, &format!("bad identifier `{t}`")));
                    }
                    if names.insert(t.to_string(), line).is_some() {
                        return Err(DfgError::Duplicate {
                            line,
                            name: t.to_string(),
                        });
                    }
                    inputs.push(t.to_string());
                }
            }
            "node" => {
                if toks.len() < 4 || toks[2] != "=" {
                    return Err(syntax(line, "expected `node <id> = <op> <arg>...`"));
                }
                let id = toks[1];
                if !is_identifier(id) {
                    return Err(syntax(line, &format!("bad identifier `{id}`")));
                }
                let op: Op = toks[3].parse().map_err(|m: String| syntax(line, &m))?;
                if names.insert(id.to_string(), line).is_some() {
                    return Err(DfgError::Duplicate {
                        line,
                        name: id.to_string(),
                    });
                }
                raw.push(RawNode {
                    line,
                    name: id.to_string(),
                    op,
                    args: toks[4..].iter().map(|s| s.to_string()).collect(),
                });
            }
            "output" => {
                if toks.len() != 4 || toks[2] != "=" {
                    return Err(syntax(line, "expected `output <id> = <node>`"));
                }
                outputs.push((line, toks[1].to_string(), toks[3].to_string()));
            }
            "criticality" => {
                if toks.len() != 3 {
                    return Err(syntax(line, "expected `criticality <node> <level>`"));
                }
                let level = toks[2].parse().map_err(|m: String| syntax(line, &m))?;
                crits.push((line, toks[1].to_string(), level));
            }
            other => return Err(syntax(line, &format!("unknown directive `{other}`"))),
        }
    }

    let input_index: HashMap<&str, usize> = inputs
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let raw_index: HashMap<&str, usize> = raw
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();

    // Resolve operands against raw indices, then check arity.
    enum RawArg {
        Input(usize),
        Node(usize),
        Const(i64),
    }
    let mut resolved: Vec<Vec<RawArg>> = Vec::with_capacity(raw.len());
    for node in &raw {
        let mut args = Vec::new();
        for a in &node.args {
            if let Some(&i) = input_index.get(a.as_str()) {
                args.push(RawArg::Input(i));
            } else if let Some(&i) = raw_index.get(a.as_str()) {
                args.push(RawArg::Node(i));
            } else if let Some(c) = parse_const(a) {
                args.push(RawArg::Const(c));
            } else {
                return Err(DfgError::UndefinedOperand {
                    line: node.line,
                    name: a.clone(),
                });
            }
        }
        if args.len() != node.op.arity() {
            return Err(DfgError::Arity {
                node: node.name.clone(),
                op: node.op,
                expected: node.op.arity(),
                got: args.len(),
            });
        }
        resolved.push(args);
    }

    // Stable Kahn ordering: always emit the lowest-index ready node.
    let n = raw.len();
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, args) in resolved.iter().enumerate() {
        for a in args {
            if let RawArg::Node(j) = a {
                indegree[i] += 1;
                users[*j].push(i);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(DfgError::Cycle {
            node: raw[stuck].name.clone(),
        });
    }
    let mut new_index = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        new_index[i] = pos;
    }

    let mut dfg = DataflowGraph::new(name, width);
    dfg.inputs = inputs;
    for &i in &order {
        let args = resolved[i]
            .iter()
            .map(|a| match *a {
                RawArg::Input(j) => Operand::Input(j),
                RawArg::Node(j) => Operand::Node(new_index[j]),
                RawArg::Const(c) => Operand::Const(c),
            })
            .collect();
        dfg.add_node(raw[i].name.clone(), raw[i].op, args);
    }
    for (line, out, src) in outputs {
        let &i = raw_index
            .get(src.as_str())
            .ok_or(DfgError::UndefinedOperand { line, name: src })?;
        dfg.add_output(out, new_index[i]);
    }
    for (line, node, level) in crits {
        let &i = raw_index
            .get(node.as_str())
            .ok_or(DfgError::UndefinedOperand { line, name: node })?;
        dfg.nodes[new_index[i]].criticality = level;
    }
    Ok(dfg)
}

/// Reduces `leaves` with a balanced tree of `add` nodes named `<prefix><k>`.
fn adder_tree(dfg: &mut DataflowGraph, prefix: &str, mut level: Vec<Operand>) -> Operand {
    let mut k = 0;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            if let [a, b] = pair {
                next.push(dfg.add_node(format!("{prefix}{k}"), Op::Add, vec![*a, *b]));
                k += 1;
            } else {
                next.push(pair[0]);
            }
        }
        level = next;
    }
    level[0]
}

fn node_index(op: Operand) -> usize {
    match op {
        Operand::Node(i) => i,
        _ => unreachable!("generator roots are nodes"),
    }
}

/// `n`×`n` convolution: pixel × coefficient products summed by an adder tree.
pub fn gen_conv(n: usize) -> DataflowGraph {
    assert!(n >= 1, "window side must be positive");
    let taps = n * n;
    let mut dfg = DataflowGraph::new(format!("conv{n}x{n}"), Width::default());
    let pixels: Vec<_> = (0..taps).map(|k| dfg.add_input(format!("i{k}"))).collect();
    let coeffs: Vec<_> = (0..taps).map(|k| dfg.add_input(format!("c{k}"))).collect();
    let products = (0..taps)
        .map(|k| dfg.add_node(format!("m{k}"), Op::Mul, vec![pixels[k], coeffs[k]]))
        .collect();
    let root = adder_tree(&mut dfg, "a", products);
    dfg.add_output("o0", node_index(root));
    dfg
}

/// `n`×`n` sum of absolute differences between blocks `a` and `b`.
pub fn gen_sad(n: usize) -> DataflowGraph {
    assert!(n >= 1, "window side must be positive");
    let taps = n * n;
    let mut dfg = DataflowGraph::new(format!("sad{n}x{n}"), Width::default());
    let a: Vec<_> = (0..taps).map(|k| dfg.add_input(format!("a{k}"))).collect();
    let b: Vec<_> = (0..taps).map(|k| dfg.add_input(format!("b{k}"))).collect();
    let diffs = (0..taps)
        .map(|k| dfg.add_node(format!("d{k}"), Op::SubAbs, vec![a[k], b[k]]))
        .collect();
    let root = adder_tree(&mut dfg, "s", diffs);
    dfg.add_output("o0", node_index(root));
    dfg
}

pub const SOBEL_GX: [i64; 9] = [-1, 0, 1, -2, 0, 2, -1, 0, 1];
pub const SOBEL_GY: [i64; 9] = [-1, -2, -1, 0, 0, 0, 1, 2, 1];

/// 3×3 Sobel edge magnitude, approximated as `|gx| + |gy|`.
pub fn gen_sobel() -> DataflowGraph {
    let mut dfg = DataflowGraph::new("sobel", Width::default());
    let pixels: Vec<_> = (0..9).map(|k| dfg.add_input(format!("p{k}"))).collect();
    let gradient = |dfg: &mut DataflowGraph, tag: &str, coeffs: &[i64; 9]| {
        let products = (0..9)
            .map(|k| {
                dfg.add_node(
                    format!("m{tag}{k}"),
                    Op::Mul,
                    vec![pixels[k], Operand::Const(coeffs[k])],
                )
            })
            .collect();
        adder_tree(dfg, &format!("a{tag}"), products)
    };
    let gx = gradient(&mut dfg, "x", &SOBEL_GX);
    let gy = gradient(&mut dfg, "y", &SOBEL_GY);
    let ex = dfg.add_node("ex", Op::SubAbs, vec![gx, Operand::Const(0)]);
    let ey = dfg.add_node("ey", Op::SubAbs, vec![gy, Operand::Const(0)]);
    let mag = dfg.add_node("mag", Op::Add, vec![ex, ey]);
    dfg.add_output("o0", node_index(mag));
    dfg
}

/// Resolves a built-in kernel name such as `conv2x2`, `sad3x3` or `sobel`.
pub fn builtin(name: &str) -> Option<DataflowGraph> {
    if name == "sobel" {
        return Some(gen_sobel());
    }
    let side = |rest: &str| -> Option<usize> {
        let (a, b) = rest.split_once('x')?;
        let n: usize = a.parse().ok()?;
        (b.parse::<usize>().ok()? == n && n >= 1).then_some(n)
    };
    if let Some(rest) = name.strip_prefix("conv") {
        return side(rest).map(gen_conv);
    }
    if let Some(rest) = name.strip_prefix("sad") {
        return side(rest).map(gen_sad);
    }
    None
}

/// Evaluates the graph on one input vector; the golden reference.
pub fn eval_dfg(dfg: &DataflowGraph, inputs: &[u64]) -> Result<Vec<u64>, DfgError> {
    if inputs.len() != dfg.inputs.len() {
        return Err(DfgError::InputArity {
            expected: dfg.inputs.len(),
            got: inputs.len(),
        });
    }
    let w = dfg.width;
    let mut values: Vec<u64> = Vec::with_capacity(dfg.nodes.len());
    let mut args = [0u64; 3];
    for node in &dfg.nodes {
        for (slot, arg) in args.iter_mut().zip(&node.args) {
            *slot = match *arg {
                Operand::Input(i) => w.truncate(inputs[i]),
                Operand::Node(i) => values[i],
                Operand::Const(c) => w.from_signed(c),
            };
        }
        values.push(node.op.apply(w, &args[..node.args.len()]));
    }
    Ok(dfg.outputs.iter().map(|o| values[o.node]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV2X2: &str = "\
# 2x2 convolution
kernel conv2x2
width 16
input i0 i1 i2 i3 c0 c1 c2 c3
node m0 = mul i0 c0
node m1 = mul i1 c1
node m2 = mul i2 c2
node m3 = mul i3 c3
node a0 = add m0 m1
node a1 = add m2 m3
node a2 = add a0 a1
output o0 = a2
";

    #[test]
    fn parses_conv2x2_file() {
        let dfg = parse_dfg(CONV2X2).unwrap();
        assert_eq!(dfg.inputs.len(), 8);
        assert_eq!(dfg.nodes.len(), 7);
        assert_eq!(dfg.outputs.len(), 1);
        assert_eq!(dfg, gen_conv(2));
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let err = parse_dfg("input a\nnode x = add x a\noutput o = x\n").unwrap_err();
        assert_eq!(err, DfgError::Cycle { node: "x".into() });
    }

    #[test]
    fn longer_cycle_detected() {
        let text = "input a\nnode x = add y a\nnode y = add x a\noutput o = y\n";
        assert!(matches!(parse_dfg(text), Err(DfgError::Cycle { .. })));
    }

    #[test]
    fn forward_references_are_reordered() {
        let text = "input a b\nnode y = mul x b\nnode x = add a b\noutput o = y\n";
        let dfg = parse_dfg(text).unwrap();
        assert_eq!(dfg.nodes[0].name, "x");
        assert_eq!(dfg.nodes[1].args, vec![Operand::Node(0), Operand::Input(1)]);
        dfg.validate().unwrap();
    }

    #[test]
    fn add_with_three_operands_is_arity_error() {
        let err = parse_dfg("input a b c\nnode x = add a b c\noutput o = x\n").unwrap_err();
        assert!(matches!(err, DfgError::Arity { got: 3, .. }));
    }

    #[test]
    fn undefined_operand() {
        let err = parse_dfg("input a\nnode x = add a q\n").unwrap_err();
        assert_eq!(
            err,
            DfgError::UndefinedOperand {
                line: 2,
                name: "q".into()
            }
        );
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = parse_dfg("kernel k\nnode x add a b\n").unwrap_err();
        assert!(matches!(err, DfgError::Syntax { line: 2, .. }));
        let err = parse_dfg("width 12\n").unwrap_err();
        assert!(matches!(err, DfgError::Syntax { line: 1, .. }));
    }

    #[test]
    fn criticality_and_constants() {
        let text = "input a\nnode x = subabs a -3\noutput o = x\ncriticality x low\n";
        let dfg = parse_dfg(text).unwrap();
        assert_eq!(dfg.nodes[0].criticality, Criticality::Low);
        assert_eq!(dfg.nodes[0].args[1], Operand::Const(-3));
        assert_eq!(parse_dfg(&dfg.to_text()).unwrap(), dfg);
    }

    #[test]
    fn generator_sizes() {
        let c2 = gen_conv(2);
        assert_eq!((c2.count(Op::Mul), c2.count(Op::Add)), (4, 3));
        let c1 = gen_conv(1);
        assert_eq!((c1.count(Op::Mul), c1.count(Op::Add)), (1, 0));
        let c3 = gen_conv(3);
        assert_eq!((c3.count(Op::Mul), c3.count(Op::Add)), (9, 8));
        assert_eq!(c3.inputs.len(), 18);
        let s2 = gen_sad(2);
        assert_eq!((s2.count(Op::SubAbs), s2.count(Op::Add)), (4, 3));
        assert_eq!(gen_sad(1).nodes.len(), 1);
        assert_eq!(gen_sobel().nodes.len(), 37);
        for g in [c1, c2, c3, s2, gen_sobel()] {
            g.validate().unwrap();
        }
    }

    #[test]
    fn builtin_names() {
        assert_eq!(builtin("conv2x2"), Some(gen_conv(2)));
        assert_eq!(builtin("sad3x3"), Some(gen_sad(3)));
        assert!(builtin("conv2x3").is_none());
        assert!(builtin("blur").is_none());
    }

    #[test]
    fn worked_evaluations() {
        let conv = gen_conv(2);
        assert_eq!(eval_dfg(&conv, &[1, 2, 3, 4, 1, 0, 0, 1]).unwrap(), vec![5]);
        let sad = gen_sad(2);
        assert_eq!(eval_dfg(&sad, &[1, 2, 3, 4, 4, 3, 2, 1]).unwrap(), vec![8]);
        let w = Width::default();
        assert_eq!(Op::Vote.apply(w, &[1, 2, 4]), 0);
    }

    #[test]
    fn input_arity_checked() {
        let err = eval_dfg(&gen_conv(2), &[1, 2, 3]).unwrap_err();
        assert_eq!(
            err,
            DfgError::InputArity {
                expected: 8,
                got: 3
            }
        );
    }

    #[test]
    fn subabs_wraps_min() {
        let w = Width::new(8).unwrap();
        assert_eq!(Op::SubAbs.apply(w, &[0x80, 0]), 0x80);
        assert_eq!(Op::SubAbs.apply(w, &[3, 5]), 2);
        // 100 - (-100) wraps to -56 before the absolute value.
        assert_eq!(Op::SubAbs.apply(w, &[100, w.from_signed(-100)]), 56);
    }

    #[test]
    fn vote_masks_one_replica_exhaustively_at_width_8() {
        let w = Width::new(8).unwrap();
        for a in 0..256u64 {
            for b in 0..256u64 {
                assert_eq!(Op::Vote.apply(w, &[a, a, b]), a);
                assert_eq!(Op::Vote.apply(w, &[a, b, a]), a);
                assert_eq!(Op::Vote.apply(w, &[b, a, a]), a);
            }
        }
    }

    #[test]
    fn sobel_on_vertical_edge() {
        // Left column 0, right column 10: gx = 40, gy = 0.
        let px = [0, 5, 10, 0, 5, 10, 0, 5, 10];
        let out = eval_dfg(&gen_sobel(), &px).unwrap();
        assert_eq!(out, vec![40]);
    }
}
