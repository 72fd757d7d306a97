//! The five labelling analyses. Each takes a root instruction and marks a set
//! of vertices; `steps` records how much propagation the answer needed.
//!
//! Reachability and DataDep count steps as the largest BFS distance (in
//! graph edges) from the root. Liveness and DomTree count round-robin passes
//! over the function, including the final pass that confirms the fixpoint.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use fixedbitset::FixedBitSet;

use crate::graph::{Adjacency, Flow, ProgramGraph, VertexKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AnalysisTask {
    Reachability,
    DomTree,
    DataDep,
    Liveness,
    Subexpressions,
}

impl AnalysisTask {
    pub const ALL: [AnalysisTask; 5] = [
        AnalysisTask::Reachability,
        AnalysisTask::DomTree,
        AnalysisTask::DataDep,
        AnalysisTask::Liveness,
        AnalysisTask::Subexpressions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisTask::Reachability => "reachability",
            AnalysisTask::DomTree => "domtree",
            AnalysisTask::DataDep => "datadep",
            AnalysisTask::Liveness => "liveness",
            AnalysisTask::Subexpressions => "subexpressions",
        }
    }

    /// Vertex kind that may carry a positive label.
    pub fn label_kind(self) -> VertexKind {
        match self {
            AnalysisTask::Liveness => VertexKind::Variable,
            _ => VertexKind::Instruction,
        }
    }
}

impl fmt::Display for AnalysisTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown analysis task {0:?}")]
pub struct UnknownTask(pub String);

impl FromStr for AnalysisTask {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, UnknownTask> {
        AnalysisTask::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownTask(s.into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisResult {
    pub task: AnalysisTask,
    pub root: usize,
    pub labels: FixedBitSet,
    pub steps: u32,
}

impl AnalysisResult {
    pub fn positives(&self) -> Vec<usize> {
        self.labels.ones().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("root {root} is not an instruction vertex")]
    RootKind { root: usize },
    #[error("root {root} has no expression key")]
    IneligibleRoot { root: usize },
}

const NON_EXPRESSIONS: &[&str] = &[
    "load", "store", "call", "alloca", "phi", "invoke", "va_arg", "atomicrmw", "cmpxchg", "landingpad",
    "catchpad", "cleanuppad", "fence",
];

const COMMUTATIVE: &[&str] = &["add", "mul", "and", "or", "xor", "fadd", "fmul"];
const COMMUTATIVE_PREDICATES: &[(&str, &[&str])] =
    &[("icmp", &["eq", "ne"]), ("fcmp", &["oeq", "ueq", "one", "une"])];

fn is_type_word(w: &str) -> bool {
    let int = w.strip_prefix('i').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
    int || w.starts_with(['<', '[', '{', '%'])
        || matches!(w, "void" | "half" | "bfloat" | "float" | "double" | "x86_fp80" | "fp128" | "ppc_fp128" | "ptr" | "label")
}

/// Opcode followed by flags and predicates, e.g. `["icmp", "eq"]`, parsed
/// from a normalized statement that defines a result.
fn opcode_words(text: &str) -> Option<Vec<&str>> {
    let rest = text.strip_prefix("<%ID> = ")?;
    let words: Vec<&str> = rest.split(' ').take_while(|w| !is_type_word(w)).collect();
    if words.is_empty() {
        None
    } else {
        Some(words)
    }
}

/// Identity of the value an instruction computes. Two instructions with
/// equal keys compute the same expression over the same operand vertices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExpressionKey {
    pub text: String,
    pub operands: Vec<usize>,
}

/// Cached adjacency for running many analyses over one graph.
pub struct Analyzer<'g> {
    graph: &'g ProgramGraph,
    control: Adjacency,
    control_rev: Adjacency,
    /// Operand vertices per instruction in position order.
    operands: Vec<Vec<usize>>,
    /// Variables written by each instruction.
    defs: Vec<Vec<usize>>,
    /// Defining instructions of each variable.
    definers: Vec<Vec<usize>>,
    keys: Vec<Option<ExpressionKey>>,
    key_groups: BTreeMap<ExpressionKey, Vec<usize>>,
}

impl<'g> Analyzer<'g> {
    pub fn new(graph: &'g ProgramGraph) -> Self {
        let n = graph.vertices.len();
        let mut operands: Vec<Vec<(u32, usize)>> = vec![Vec::new(); n];
        let mut defs = vec![Vec::new(); n];
        let mut definers = vec![Vec::new(); n];
        for e in graph.edges.iter().filter(|e| e.flow == Flow::Data) {
            match graph.vertices[e.dst].kind {
                VertexKind::Instruction => operands[e.dst].push((e.position, e.src)),
                _ => {
                    defs[e.src].push(e.dst);
                    definers[e.dst].push(e.src);
                }
            }
        }
        let operands: Vec<Vec<usize>> = operands
            .into_iter()
            .map(|mut ops| {
                ops.sort_unstable();
                ops.into_iter().map(|(_, v)| v).collect()
            })
            .collect();
        let mut a = Analyzer {
            graph,
            control: graph.adjacency(Flow::Control),
            control_rev: graph.reverse_adjacency(Flow::Control),
            operands,
            defs,
            definers,
            keys: Vec::new(),
            key_groups: BTreeMap::new(),
        };
        a.keys = (0..n).map(|v| a.compute_key(v)).collect();
        for (v, k) in a.keys.iter().enumerate() {
            if let Some(k) = k {
                a.key_groups.entry(k.clone()).or_default().push(v);
            }
        }
        a
    }

    pub fn graph(&self) -> &'g ProgramGraph {
        self.graph
    }

    fn compute_key(&self, v: usize) -> Option<ExpressionKey> {
        let vertex = &self.graph.vertices[v];
        if vertex.kind != VertexKind::Instruction || self.graph.is_dummy_vertex(v) {
            return None;
        }
        let words = opcode_words(&vertex.text)?;
        let result = *self.defs[v].first()?;
        if self.operands[v].is_empty() || NON_EXPRESSIONS.contains(&words[0]) {
            return None;
        }
        let commutative = COMMUTATIVE.contains(&words[0])
            || COMMUTATIVE_PREDICATES.iter().any(|(op, preds)| *op == words[0] && words[1..].iter().any(|w| preds.contains(w)));
        if commutative {
            let mut text = words.join(" ");
            text.push(' ');
            text.push_str(&self.graph.vertices[result].text);
            let mut ops = self.operands[v].clone();
            ops.sort_unstable();
            Some(ExpressionKey { text, operands: ops })
        } else {
            Some(ExpressionKey { text: vertex.text.clone(), operands: self.operands[v].clone() })
        }
    }

    pub fn expression_key(&self, v: usize) -> Option<&ExpressionKey> {
        self.keys.get(v)?.as_ref()
    }

    pub fn operands(&self, v: usize) -> &[usize] {
        &self.operands[v]
    }

    pub fn defs(&self, v: usize) -> &[usize] {
        &self.defs[v]
    }

    pub fn control_successors(&self, v: usize) -> &[usize] {
        self.control.neighbors(v)
    }

    fn check_root(&self, root: usize) -> Result<(), AnalysisError> {
        match self.graph.vertices.get(root) {
            Some(v) if v.kind == VertexKind::Instruction => Ok(()),
            _ => Err(AnalysisError::RootKind { root }),
        }
    }

    fn empty(&self) -> FixedBitSet {
        FixedBitSet::with_capacity(self.graph.vertices.len())
    }

    fn bfs(&self, root: usize, next: impl Fn(usize, &mut dyn FnMut(usize))) -> (FixedBitSet, u32) {
        let mut seen = self.empty();
        seen.insert(root);
        let mut frontier = vec![root];
        let mut depth = 0;
        loop {
            let mut upcoming = Vec::new();
            for &v in &frontier {
                next(v, &mut |w| {
                    if !seen.contains(w) {
                        seen.insert(w);
                        upcoming.push(w);
                    }
                });
            }
            if upcoming.is_empty() {
                return (seen, depth);
            }
            depth += 1;
            frontier = upcoming;
        }
    }

    pub fn reachability(&self, root: usize) -> Result<AnalysisResult, AnalysisError> {
        self.check_root(root)?;
        let (labels, steps) = self.bfs(root, |v, visit| {
            for &w in self.control.neighbors(v) {
                visit(w);
            }
        });
        Ok(AnalysisResult { task: AnalysisTask::Reachability, root, labels, steps })
    }

    /// Statements whose results flow into the root, walking variable
    /// vertices back to their definitions.
    pub fn datadep(&self, root: usize) -> Result<AnalysisResult, AnalysisError> {
        self.check_root(root)?;
        let (seen, steps) = self.bfs(root, |v, visit| {
            if self.graph.vertices[v].kind == VertexKind::Instruction {
                for &op in &self.operands[v] {
                    if self.graph.vertices[op].kind == VertexKind::Variable {
                        visit(op);
                    }
                }
            } else {
                for &d in &self.definers[v] {
                    visit(d);
                }
            }
        });
        let mut labels = self.empty();
        for v in seen.ones().filter(|&v| self.graph.vertices[v].kind == VertexKind::Instruction) {
            labels.insert(v);
        }
        Ok(AnalysisResult { task: AnalysisTask::DataDep, root, labels, steps })
    }

    /// Instructions of the root's function in DFS postorder from the entry
    /// over control edges, followed by the unreachable ones in id order.
    /// Also returns how many are reachable.
    fn function_postorder(&self, root: usize) -> (Vec<usize>, usize) {
        let g = self.graph;
        let name = g.vertices[root].function.as_deref();
        let entry = name.and_then(|n| g.function_table.get(n)).map_or(root, |f| f.entry);
        let mut order = Vec::new();
        let mut visited = self.empty();
        let mut stack: Vec<(usize, usize)> = vec![(entry, 0)];
        visited.insert(entry);
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            let succ = self.control.neighbors(v);
            if *i < succ.len() {
                let w = succ[*i];
                *i += 1;
                if !visited.contains(w) {
                    visited.insert(w);
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
        let reachable = order.len();
        for v in g.vertices.iter().filter(|v| v.kind == VertexKind::Instruction && v.function.as_deref() == name) {
            if !visited.contains(v.id) {
                order.push(v.id);
            }
        }
        (order, reachable)
    }

    pub fn liveness(&self, root: usize) -> Result<AnalysisResult, AnalysisError> {
        self.check_root(root)?;
        let (order, _) = self.function_postorder(root);
        // dense indices for the variables this function touches
        let mut var_index: BTreeMap<usize, usize> = BTreeMap::new();
        for &v in &order {
            for &x in self.operands[v].iter().chain(&self.defs[v]) {
                if self.graph.vertices[x].kind == VertexKind::Variable {
                    let next = var_index.len();
                    var_index.entry(x).or_insert(next);
                }
            }
        }
        let nv = var_index.len();
        let mut slot = BTreeMap::new();
        for (i, &v) in order.iter().enumerate() {
            slot.insert(v, i);
        }
        let set = |vs: &[usize]| {
            let mut s = FixedBitSet::with_capacity(nv);
            for x in vs {
                if let Some(&i) = var_index.get(x) {
                    s.insert(i);
                }
            }
            s
        };
        let uses: Vec<FixedBitSet> = order.iter().map(|&v| set(&self.operands[v])).collect();
        let kills: Vec<FixedBitSet> = order.iter().map(|&v| set(&self.defs[v])).collect();
        let mut live_in = vec![FixedBitSet::with_capacity(nv); order.len()];
        let mut live_out = vec![FixedBitSet::with_capacity(nv); order.len()];
        let mut steps = 0;
        loop {
            steps += 1;
            let mut changed = false;
            for i in 0..order.len() {
                let mut out = FixedBitSet::with_capacity(nv);
                for s in self.control.neighbors(order[i]) {
                    if let Some(&j) = slot.get(s) {
                        out.union_with(&live_in[j]);
                    }
                }
                let mut inn = out.clone();
                inn.difference_with(&kills[i]);
                inn.union_with(&uses[i]);
                if inn != live_in[i] || out != live_out[i] {
                    changed = true;
                    live_in[i] = inn;
                    live_out[i] = out;
                }
            }
            if !changed {
                break;
            }
        }
        let mut labels = self.empty();
        let root_out = &live_out[slot[&root]];
        for (&x, &i) in &var_index {
            if root_out.contains(i) {
                labels.insert(x);
            }
        }
        Ok(AnalysisResult { task: AnalysisTask::Liveness, root, labels, steps })
    }

    /// Dominators of the root within its function, relative to the
    /// function entry.
    pub fn dominators(&self, root: usize) -> Result<AnalysisResult, AnalysisError> {
        self.check_root(root)?;
        let (mut order, reachable) = self.function_postorder(root);
        order.truncate(reachable);
        order.reverse();
        let mut labels = self.empty();
        let Some(root_slot) = order.iter().position(|&v| v == root) else {
            labels.insert(root);
            return Ok(AnalysisResult { task: AnalysisTask::DomTree, root, labels, steps: 0 });
        };
        let k = order.len();
        let mut slot = BTreeMap::new();
        for (i, &v) in order.iter().enumerate() {
            slot.insert(v, i);
        }
        let mut dom = vec![FixedBitSet::with_capacity(k); k];
        dom[0].insert(0);
        for d in dom.iter_mut().skip(1) {
            d.insert_range(..);
        }
        let mut steps = 0;
        loop {
            steps += 1;
            let mut changed = false;
            for i in 1..k {
                let mut meet: Option<FixedBitSet> = None;
                for p in self.control_rev.neighbors(order[i]) {
                    if let Some(&j) = slot.get(p) {
                        match &mut meet {
                            None => meet = Some(dom[j].clone()),
                            Some(m) => m.intersect_with(&dom[j]),
                        }
                    }
                }
                let mut next = meet.unwrap_or_else(|| FixedBitSet::with_capacity(k));
                next.insert(i);
                if next != dom[i] {
                    dom[i] = next;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for i in dom[root_slot].ones() {
            labels.insert(order[i]);
        }
        Ok(AnalysisResult { task: AnalysisTask::DomTree, root, labels, steps })
    }

    /// Every instruction computing the same expression over the same
    /// operands as the root.
    pub fn subexpressions(&self, root: usize) -> Result<AnalysisResult, AnalysisError> {
        self.check_root(root)?;
        let key = self.keys[root].as_ref().ok_or(AnalysisError::IneligibleRoot { root })?;
        let mut labels = self.empty();
        let group = &self.key_groups[key];
        for &v in group {
            labels.insert(v);
        }
        let steps = if group.len() > 1 { 2 } else { 1 };
        Ok(AnalysisResult { task: AnalysisTask::Subexpressions, root, labels, steps })
    }

    pub fn run(&self, task: AnalysisTask, root: usize) -> Result<AnalysisResult, AnalysisError> {
        match task {
            AnalysisTask::Reachability => self.reachability(root),
            AnalysisTask::DomTree => self.dominators(root),
            AnalysisTask::DataDep => self.datadep(root),
            AnalysisTask::Liveness => self.liveness(root),
            AnalysisTask::Subexpressions => self.subexpressions(root),
        }
    }

    fn reachable_from_entry(&self) -> FixedBitSet {
        let mut seen = self.empty();
        let mut stack: Vec<usize> = self.graph.function_table.values().map(|f| f.entry).collect();
        for &v in &stack {
            seen.insert(v);
        }
        while let Some(v) = stack.pop() {
            for &w in self.control.neighbors(v) {
                if !seen.contains(w) {
                    seen.insert(w);
                    stack.push(w);
                }
            }
        }
        seen
    }

    pub fn eligible_roots(&self, task: AnalysisTask) -> Vec<usize> {
        let g = self.graph;
        let base = g
            .vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Instruction && v.function.is_some() && !g.is_dummy_vertex(v.id))
            .map(|v| v.id);
        match task {
            AnalysisTask::DomTree => {
                let reach = self.reachable_from_entry();
                base.filter(|&v| reach.contains(v)).collect()
            }
            AnalysisTask::Subexpressions => {
                base.filter(|&v| self.keys[v].as_ref().is_some_and(|k| self.key_groups[k].len() >= 2)).collect()
            }
            _ => base.collect(),
        }
    }

    /// Vertices whose labels are scored for a task.
    pub fn is_label_eligible(&self, task: AnalysisTask, v: usize) -> bool {
        self.graph.vertices[v].kind == task.label_kind() && !self.graph.is_dummy_vertex(v)
    }
}

pub fn reachability(graph: &ProgramGraph, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).reachability(root)
}

pub fn dominators(graph: &ProgramGraph, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).dominators(root)
}

pub fn datadep(graph: &ProgramGraph, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).datadep(root)
}

pub fn liveness(graph: &ProgramGraph, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).liveness(root)
}

pub fn subexpressions(graph: &ProgramGraph, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).subexpressions(root)
}

pub fn run_analysis(graph: &ProgramGraph, task: AnalysisTask, root: usize) -> Result<AnalysisResult, AnalysisError> {
    Analyzer::new(graph).run(task, root)
}

pub fn eligible_roots(graph: &ProgramGraph, task: AnalysisTask) -> Vec<usize> {
    Analyzer::new(graph).eligible_roots(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ir::parse_ir;

    fn graph(src: &str) -> ProgramGraph {
        build_graph(&parse_ir(src).unwrap()).unwrap()
    }

    const DIAMOND: &str = "define void @f(i1 %c) {\na:\n  br i1 %c, label %b, label %c2\nb:\n  br label %d\nc2:\n  br label %d\nd:\n  ret void\n}";

    fn find(g: &ProgramGraph, text: &str) -> usize {
        g.vertices.iter().find(|v| v.text == text).unwrap_or_else(|| panic!("no vertex {text}")).id
    }

    #[test]
    fn diamond_reachability() {
        let g = graph(DIAMOND);
        let r = reachability(&g, 1).unwrap();
        assert_eq!(r.positives(), [1, 2, 3, 4]);
        assert_eq!(r.steps, 2);
        let r = reachability(&g, 4).unwrap();
        assert_eq!(r.positives(), [4]);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn diamond_dominators() {
        let g = graph(DIAMOND);
        assert_eq!(dominators(&g, 4).unwrap().positives(), [1, 4]);
        assert_eq!(dominators(&g, 1).unwrap().positives(), [1]);
        assert_eq!(dominators(&g, 2).unwrap().positives(), [1, 2]);
    }

    #[test]
    fn unreachable_block_is_its_own_dominator_only() {
        let g = graph("define void @f() {\na:\n  ret void\ndead:\n  br label %a\n}");
        let r = dominators(&g, 2).unwrap();
        assert_eq!(r.positives(), [2]);
        assert_eq!(eligible_roots(&g, AnalysisTask::DomTree), [1]);
    }

    #[test]
    fn root_must_be_an_instruction() {
        let g = graph(DIAMOND);
        for task in AnalysisTask::ALL {
            assert_eq!(run_analysis(&g, task, 0), Err(AnalysisError::RootKind { root: 0 }));
            assert_eq!(run_analysis(&g, task, 999), Err(AnalysisError::RootKind { root: 999 }));
        }
    }

    #[test]
    fn datadep_chain() {
        let g = graph("define i32 @f() {\n  %x = add i32 0, 1\n  %y = add i32 %x, 1\n  %z = add i32 %y, 1\n  ret i32 %z\n}");
        let r = datadep(&g, 3).unwrap();
        assert_eq!(r.positives(), [1, 2, 3]);
        assert_eq!(r.steps, 4);
        assert_eq!(datadep(&g, 1).unwrap().positives(), [1]);
    }

    #[test]
    fn liveness_use_after_def() {
        let g = graph("define i32 @f() {\n  %x = add i32 0, 1\n  ret i32 %x\n}");
        let x = g.vertices.iter().find(|v| v.kind == VertexKind::Variable).unwrap().id;
        let r = liveness(&g, 1).unwrap();
        assert_eq!(r.positives(), [x]);
        assert!(liveness(&g, 2).unwrap().positives().is_empty());
    }

    #[test]
    fn liveness_around_a_loop() {
        let g = graph(
            "define i32 @f(i32 %n) {\nentry:\n  br label %loop\nloop:\n  %i = phi i32 [ 0, %entry ], [ %j, %loop ]\n  \
             %j = add i32 %i, 1\n  %c = icmp slt i32 %j, %n\n  br i1 %c, label %loop, label %out\nout:\n  ret i32 %j\n}",
        );
        let var = |name_type: &str, nth: usize| {
            g.vertices.iter().filter(|v| v.kind == VertexKind::Variable && v.text == name_type).nth(nth).unwrap().id
        };
        // i32 variables in order of first use: %j (phi operand), %i, %n
        let (j, n, c) = (var("i32", 0), var("i32", 2), var("i1", 0));
        let icmp = find(&g, "<%ID> = icmp slt i32 <%ID>, <%ID>");
        let live = liveness(&g, icmp).unwrap();
        assert_eq!(live.positives(), [j, n, c]);
        assert!(live.steps >= 2);
    }

    #[test]
    fn commutative_subexpressions() {
        let g = graph("define i32 @f(i32 %x, i32 %y) {\n  %a = add i32 %x, %y\n  %b = add i32 %y, %x\n  ret i32 %a\n}");
        assert_eq!(subexpressions(&g, 1).unwrap().positives(), [1, 2]);
        assert_eq!(subexpressions(&g, 2).unwrap().positives(), [1, 2]);
        assert_eq!(eligible_roots(&g, AnalysisTask::Subexpressions), [1, 2]);
        assert_eq!(subexpressions(&g, 3), Err(AnalysisError::IneligibleRoot { root: 3 }));
    }

    #[test]
    fn ordered_subexpressions() {
        let g = graph("define i32 @f(i32 %x, i32 %y) {\n  %a = sdiv i32 %x, %y\n  %b = sdiv i32 %y, %x\n  ret i32 %a\n}");
        assert_eq!(subexpressions(&g, 1).unwrap().positives(), [1]);
        assert!(eligible_roots(&g, AnalysisTask::Subexpressions).is_empty());
    }

    #[test]
    fn constant_operands_on_either_side_still_match() {
        let g = graph("define i32 @f(i32 %x) {\n  %a = mul i32 %x, 3\n  %b = mul i32 3, %x\n  ret i32 %b\n}");
        assert_eq!(subexpressions(&g, 1).unwrap().positives(), [1, 2]);
    }

    #[test]
    fn memory_operations_have_no_key() {
        let g = graph("define i32 @f(i32* %p) {\n  %a = load i32, i32* %p\n  %b = load i32, i32* %p\n  ret i32 %a\n}");
        assert!(eligible_roots(&g, AnalysisTask::Subexpressions).is_empty());
    }

    #[test]
    fn task_names_round_trip() {
        for t in AnalysisTask::ALL {
            assert_eq!(t.as_str().parse::<AnalysisTask>().unwrap(), t);
        }
        assert!("nope".parse::<AnalysisTask>().is_err());
    }
}
