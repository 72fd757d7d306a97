//! ProGraML program graphs: instruction, variable and constant vertices joined
//! by positioned control, data and call edges.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::ir::{IRModule, OperandKind};
use crate::vocab::Normalizer;

pub const EXTERNAL_TEXT: &str = "<external>";
pub const DUMMY_ENTRY_TEXT: &str = "<dummy entry>";
pub const DUMMY_EXIT_TEXT: &str = "<dummy exit>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VertexKind {
    Instruction,
    Variable,
    Constant,
    External,
}

impl VertexKind {
    pub const ALL: [VertexKind; 4] =
        [VertexKind::Instruction, VertexKind::Variable, VertexKind::Constant, VertexKind::External];

    pub fn as_str(self) -> &'static str {
        match self {
            VertexKind::Instruction => "instruction",
            VertexKind::Variable => "variable",
            VertexKind::Constant => "constant",
            VertexKind::External => "external",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Flow {
    Control,
    Data,
    Call,
}

impl Flow {
    pub const ALL: [Flow; 3] = [Flow::Control, Flow::Data, Flow::Call];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Flow::Control => "control",
            Flow::Data => "data",
            Flow::Call => "call",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    pub text: String,
    pub function: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub flow: Flow,
    pub position: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionInfo {
    pub entry: usize,
    pub exits: Vec<usize>,
    pub dummy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramGraph {
    pub source_path: String,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub function_table: BTreeMap<String, FunctionInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("module contains no function definitions")]
    NoDefinitions,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("vertex at index {index} has id {id}")]
    NonDenseIds { index: usize, id: usize },
    #[error("edge {index} refers to missing vertex {vertex}")]
    DanglingEdge { index: usize, vertex: usize },
}

/// Compressed adjacency lists; neighbors keep edge insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    pub fn new(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (a, _) in pairs.clone() {
            offsets[a + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        for (a, b) in pairs {
            targets[fill[a]] = b;
            fill[a] += 1;
        }
        Adjacency { offsets, targets }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ProgramGraph {
    /// Assemble a graph from serialized vertices and edges, rebuilding the
    /// function table: a function's entry is its lowest-id instruction and
    /// its exits are its instructions without outgoing control edges.
    pub fn from_parts(source_path: String, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        for (index, v) in vertices.iter().enumerate() {
            if v.id != index {
                return Err(GraphError::NonDenseIds { index, id: v.id });
            }
        }
        for (index, e) in edges.iter().enumerate() {
            for vertex in [e.src, e.dst] {
                if vertex >= vertices.len() {
                    return Err(GraphError::DanglingEdge { index, vertex });
                }
            }
        }
        let mut graph = ProgramGraph { source_path, vertices, edges, function_table: BTreeMap::new() };
        graph.function_table = graph.derive_function_table();
        Ok(graph)
    }

    fn derive_function_table(&self) -> BTreeMap<String, FunctionInfo> {
        let mut has_control_out = vec![false; self.vertices.len()];
        for e in self.edges.iter().filter(|e| e.flow == Flow::Control) {
            has_control_out[e.src] = true;
        }
        let mut table: BTreeMap<String, FunctionInfo> = BTreeMap::new();
        for v in self.vertices.iter().filter(|v| v.kind == VertexKind::Instruction) {
            let Some(name) = &v.function else { continue };
            let info = table.entry(name.clone()).or_insert_with(|| FunctionInfo {
                entry: v.id,
                exits: Vec::new(),
                dummy: v.text == DUMMY_ENTRY_TEXT,
            });
            if !has_control_out[v.id] {
                info.exits.push(v.id);
            }
        }
        table
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn adjacency(&self, flow: Flow) -> Adjacency {
        let n = self.vertices.len();
        Adjacency::new(n, self.edges.iter().filter(move |e| e.flow == flow).map(|e| (e.src, e.dst)))
    }

    pub fn reverse_adjacency(&self, flow: Flow) -> Adjacency {
        let n = self.vertices.len();
        Adjacency::new(n, self.edges.iter().filter(move |e| e.flow == flow).map(|e| (e.dst, e.src)))
    }

    /// 64-bit FNV-1a over vertex and edge content. The source path is not
    /// included.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv::new();
        for v in &self.vertices {
            h.write(&[v.kind as u8]);
            h.write(v.text.as_bytes());
            h.write(&[0xff]);
            h.write(v.function.as_deref().unwrap_or("").as_bytes());
            h.write(&[0xfe]);
        }
        for e in &self.edges {
            h.write(&(e.src as u64).to_le_bytes());
            h.write(&(e.dst as u64).to_le_bytes());
            h.write(&[e.flow as u8]);
            h.write(&e.position.to_le_bytes());
        }
        h.finish()
    }

    pub fn is_dummy_vertex(&self, v: usize) -> bool {
        let t = &self.vertices[v].text;
        self.vertices[v].kind == VertexKind::Instruction && (t == DUMMY_ENTRY_TEXT || t == DUMMY_EXIT_TEXT)
    }
}

pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

struct Builder {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    variables: BTreeMap<(Option<String>, String), usize>,
    constants: BTreeMap<(String, String), usize>,
}

impl Builder {
    fn vertex(&mut self, kind: VertexKind, text: String, function: Option<String>) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, kind, text, function });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, flow: Flow, position: u32) {
        self.edges.push(Edge { src, dst, flow, position });
    }

    fn variable(&mut self, function: &str, name: &str, type_text: &str) -> usize {
        let scope = if name.starts_with('@') { None } else { Some(function.to_string()) };
        let key = (scope, name.to_string());
        if let Some(&id) = self.variables.get(&key) {
            if self.vertices[id].text.is_empty() {
                self.vertices[id].text = type_text.to_string();
            }
            return id;
        }
        let id = self.vertex(VertexKind::Variable, type_text.to_string(), key.0.clone());
        self.variables.insert(key, id);
        id
    }

    fn constant(&mut self, type_text: &str, literal: &str) -> usize {
        let key = (type_text.to_string(), literal.to_string());
        if let Some(&id) = self.constants.get(&key) {
            return id;
        }
        let text = if type_text.is_empty() { literal.to_string() } else { format!("{type_text} {literal}") };
        let id = self.vertex(VertexKind::Constant, text, None);
        self.constants.insert(key, id);
        id
    }
}

/// Build the program graph of a validated module.
///
/// Vertex ids: the external vertex is 0, followed by the instructions of
/// every definition in source order, then one entry/exit pair per external
/// callee in order of first call, then variables and constants in order of
/// first use.
pub fn build_graph(module: &IRModule) -> Result<ProgramGraph, BuildError> {
    if module.definitions().next().is_none() {
        return Err(BuildError::NoDefinitions);
    }
    let norm = Normalizer::new(module);
    let mut b = Builder { vertices: Vec::new(), edges: Vec::new(), variables: BTreeMap::new(), constants: BTreeMap::new() };
    b.vertex(VertexKind::External, EXTERNAL_TEXT.to_string(), None);

    let defs: Vec<_> = module.definitions().collect();
    let def_index: BTreeMap<&str, usize> = defs.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
    // vertex id of every instruction, per definition and block
    let mut ids: Vec<Vec<Vec<usize>>> = Vec::with_capacity(defs.len());
    for f in &defs {
        let mut per_block = Vec::with_capacity(f.blocks.len());
        for block in &f.blocks {
            let row: Vec<usize> = block
                .instructions
                .iter()
                .map(|inst| b.vertex(VertexKind::Instruction, norm.normalize(inst), Some(f.name.clone())))
                .collect();
            per_block.push(row);
        }
        ids.push(per_block);
    }

    let mut dummies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut dummy_order: Vec<&str> = Vec::new();
    for f in &defs {
        for inst in f.instructions() {
            if let Some(callee) = inst.callee() {
                let name = callee.text.as_str();
                if callee.kind == OperandKind::FunctionRef
                    && !def_index.contains_key(name)
                    && !dummies.contains_key(name)
                {
                    let entry = b.vertex(VertexKind::Instruction, DUMMY_ENTRY_TEXT.to_string(), Some(name.to_string()));
                    let exit = b.vertex(VertexKind::Instruction, DUMMY_EXIT_TEXT.to_string(), Some(name.to_string()));
                    dummies.insert(name, (entry, exit));
                    dummy_order.push(name);
                }
            }
        }
    }

    // control flow
    for (fi, f) in defs.iter().enumerate() {
        for (bi, block) in f.blocks.iter().enumerate() {
            let row = &ids[fi][bi];
            for w in row.windows(2) {
                b.edge(w[0], w[1], Flow::Control, 0);
            }
            let Some(last) = block.instructions.last() else { continue };
            let src = *row.last().unwrap();
            let targets: Vec<usize> = last
                .successor_labels()
                .filter_map(|l| f.block_index(l))
                .filter_map(|t| ids[fi][t].first().copied())
                .collect();
            for (pos, dst) in targets.into_iter().enumerate() {
                b.edge(src, dst, Flow::Control, pos as u32);
            }
        }
    }
    for name in &dummy_order {
        let (entry, exit) = dummies[name];
        b.edge(entry, exit, Flow::Control, 0);
    }

    // data flow
    for (fi, f) in defs.iter().enumerate() {
        for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.instructions.iter().enumerate() {
                let v = ids[fi][bi][ii];
                let mut pos = 0u32;
                for op in &inst.operands {
                    let src = match op.kind {
                        OperandKind::Variable => b.variable(&f.name, &op.text, &op.type_text),
                        OperandKind::Constant => b.constant(&op.type_text, &op.text),
                        _ => continue,
                    };
                    b.edge(src, v, Flow::Data, pos);
                    pos += 1;
                }
                if let Some(result) = &inst.result {
                    let var = b.variable(&f.name, result, inst.result_type.as_deref().unwrap_or(""));
                    b.edge(v, var, Flow::Data, 0);
                }
            }
        }
    }

    let mut graph = ProgramGraph {
        source_path: module.source_path.clone(),
        vertices: b.vertices,
        edges: b.edges,
        function_table: BTreeMap::new(),
    };
    graph.function_table = graph.derive_function_table();

    // call flow
    let mut calls = Vec::new();
    for (fi, f) in defs.iter().enumerate() {
        for (bi, block) in f.blocks.iter().enumerate() {
            for (ii, inst) in block.instructions.iter().enumerate() {
                let Some(callee) = inst.callee() else { continue };
                if callee.kind != OperandKind::FunctionRef {
                    continue;
                }
                let Some(info) = graph.function_table.get(&callee.text) else { continue };
                let site = ids[fi][bi][ii];
                calls.push(Edge { src: site, dst: info.entry, flow: Flow::Call, position: 0 });
                for &exit in &info.exits {
                    calls.push(Edge { src: exit, dst: site, flow: Flow::Call, position: 0 });
                }
            }
        }
    }
    for f in defs.iter().filter(|f| f.is_externally_visible) {
        let info = &graph.function_table[&f.name];
        calls.push(Edge { src: 0, dst: info.entry, flow: Flow::Call, position: 0 });
        for &exit in &info.exits {
            calls.push(Edge { src: exit, dst: 0, flow: Flow::Call, position: 0 });
        }
    }
    graph.edges.extend(calls);
    Ok(graph)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub vertices: usize,
    pub edges: usize,
    pub max_position: u32,
    pub instructions: usize,
    pub variables: usize,
    pub constants: usize,
    pub external: usize,
    pub control_edges: usize,
    pub data_edges: usize,
    pub call_edges: usize,
    pub functions: usize,
    pub dummy_functions: usize,
}

impl GraphStats {
    pub fn kind_count(&self, kind: VertexKind) -> usize {
        match kind {
            VertexKind::Instruction => self.instructions,
            VertexKind::Variable => self.variables,
            VertexKind::Constant => self.constants,
            VertexKind::External => self.external,
        }
    }

    pub fn flow_count(&self, flow: Flow) -> usize {
        match flow {
            Flow::Control => self.control_edges,
            Flow::Data => self.data_edges,
            Flow::Call => self.call_edges,
        }
    }
}

pub fn stats(graph: &ProgramGraph) -> GraphStats {
    let mut s = GraphStats { vertices: graph.vertices.len(), edges: graph.edges.len(), ..Default::default() };
    for v in &graph.vertices {
        match v.kind {
            VertexKind::Instruction => s.instructions += 1,
            VertexKind::Variable => s.variables += 1,
            VertexKind::Constant => s.constants += 1,
            VertexKind::External => s.external += 1,
        }
    }
    for e in &graph.edges {
        s.max_position = s.max_position.max(e.position);
        match e.flow {
            Flow::Control => s.control_edges += 1,
            Flow::Data => s.data_edges += 1,
            Flow::Call => s.call_edges += 1,
        }
    }
    s.functions = graph.function_table.values().filter(|f| !f.dummy).count();
    s.dummy_functions = graph.function_table.len() - s.functions;
    s
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

pub fn export_dot(graph: &ProgramGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(&graph.source_path));
    for v in &graph.vertices {
        let shape = match v.kind {
            VertexKind::Instruction => "box",
            VertexKind::Variable => "ellipse",
            VertexKind::Constant => "diamond",
            VertexKind::External => "doubleoctagon",
        };
        let _ = writeln!(
            out,
            "  n{} [kind={}, shape={}, label=\"{}\"];",
            v.id,
            v.kind.as_str(),
            shape,
            dot_escape(&v.text)
        );
    }
    for e in &graph.edges {
        let color = match e.flow {
            Flow::Control => "blue",
            Flow::Data => "red",
            Flow::Call => "darkgreen",
        };
        let _ = write!(out, "  n{} -> n{} [flow={}, color={}", e.src, e.dst, e.flow.as_str(), color);
        if e.position > 0 {
            let _ = write!(out, ", label=\"{}\"", e.position);
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

/// Scan a graph for breaches of the structural rules every built graph
/// satisfies. An empty result means the graph is well formed.
pub fn verify(graph: &ProgramGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |rule: &'static str, detail: String| out.push(Violation { rule, detail });
    let n = graph.vertices.len();
    for (i, v) in graph.vertices.iter().enumerate() {
        if v.id != i {
            bad("dense-ids", format!("vertex {i} has id {}", v.id));
        }
        match v.kind {
            VertexKind::Instruction if v.function.is_none() => {
                bad("instruction-function", format!("instruction {i} has no function"))
            }
            VertexKind::External if v.function.is_some() => {
                bad("external-function", format!("external vertex {i} has a function"))
            }
            _ => {}
        }
    }
    let externals: Vec<usize> = graph.vertices.iter().filter(|v| v.kind == VertexKind::External).map(|v| v.id).collect();
    if externals != [0] {
        bad("external-vertex", format!("external vertices at {externals:?}"));
    }
    let kind = |v: usize| graph.vertices[v].kind;
    let mut control_out: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut data_in: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut data_touch = vec![false; n];
    let mut definers = vec![0usize; n];
    for e in &graph.edges {
        if e.src >= n || e.dst >= n {
            bad("dangling-edge", format!("{e:?}"));
            continue;
        }
        let (ks, kd) = (kind(e.src), kind(e.dst));
        match e.flow {
            Flow::Control => {
                if ks != VertexKind::Instruction || kd != VertexKind::Instruction {
                    bad("control-kinds", format!("{e:?}"));
                } else if graph.vertices[e.src].function != graph.vertices[e.dst].function {
                    bad("control-crosses-function", format!("{e:?}"));
                }
                control_out[e.src].push(e.position);
            }
            Flow::Data => {
                data_touch[e.src] = true;
                data_touch[e.dst] = true;
                let value = |k| matches!(k, VertexKind::Variable | VertexKind::Constant);
                if value(ks) && kd == VertexKind::Instruction {
                    data_in[e.dst].push(e.position);
                } else if ks == VertexKind::Instruction && kd == VertexKind::Variable {
                    if e.position != 0 {
                        bad("result-position", format!("{e:?}"));
                    }
                    definers[e.dst] += 1;
                } else {
                    bad("data-kinds", format!("{e:?}"));
                }
            }
            Flow::Call => {
                if e.position != 0 {
                    bad("call-position", format!("{e:?}"));
                }
                let ok = |k| matches!(k, VertexKind::Instruction | VertexKind::External);
                if !ok(ks) || !ok(kd) {
                    bad("call-kinds", format!("{e:?}"));
                }
            }
        }
    }
    let complete = |positions: &mut Vec<u32>| {
        positions.sort_unstable();
        positions.iter().enumerate().all(|(i, &p)| p == i as u32)
    };
    for v in 0..n {
        if !complete(&mut control_out[v]) {
            bad("control-positions", format!("vertex {v}: {:?}", control_out[v]));
        }
        if !complete(&mut data_in[v]) {
            bad("operand-positions", format!("vertex {v}: {:?}", data_in[v]));
        }
        if matches!(kind(v), VertexKind::Variable | VertexKind::Constant) && !data_touch[v] {
            bad("isolated-value", format!("vertex {v}"));
        }
        if definers[v] > 1 {
            bad("variable-definers", format!("vertex {v} has {} definers", definers[v]));
        }
    }
    let mut seen_constants = BTreeSet::new();
    for v in graph.vertices.iter().filter(|v| v.kind == VertexKind::Constant) {
        if !seen_constants.insert(v.text.as_str()) {
            bad("duplicate-constant", format!("vertex {} {:?}", v.id, v.text));
        }
    }
    out
}
