//! Brute-force oracles, a dense network reference and random inputs shared
//! by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use programl_core::analysis::AnalysisTask;
use programl_core::graph::{build_graph, Flow, ProgramGraph, VertexKind};
use programl_core::ir::parse_ir;
use programl_core::model::{Batch, EdgeInput, EncodedGraph, ModelConfig, ModelParameters};
use programl_core::synth::{random_cfg_program, structured_program, SynthConfig};
use rand::Rng;

pub fn graph_of(src: &str) -> ProgramGraph {
    build_graph(&parse_ir(src).expect("program parses")).expect("program has a definition")
}

/// A random program graph with at most `max_vertices` vertices; arbitrary
/// and structured control flow alternate.
pub fn random_small_graph<R: Rng>(rng: &mut R, max_vertices: usize) -> ProgramGraph {
    loop {
        let src = if rng.gen_bool(0.5) {
            let blocks = rng.gen_range(1..6);
            random_cfg_program(rng, blocks, 3)
        } else {
            let cfg = SynthConfig { max_helpers: 1, max_statements: 3, max_depth: 2, max_params: 2 };
            structured_program(rng, &cfg)
        };
        let g = graph_of(&src);
        if g.num_vertices() <= max_vertices {
            return g;
        }
    }
}

fn edges_of(g: &ProgramGraph, flow: Flow) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
    g.edges.iter().filter(move |e| e.flow == flow).map(|e| (e.src, e.dst, e.position))
}

fn is_dummy(g: &ProgramGraph, v: usize) -> bool {
    g.vertices[v].function.as_ref().is_some_and(|f| g.function_table.get(f).is_some_and(|i| i.dummy))
}

fn bits(n: usize, items: impl IntoIterator<Item = usize>) -> FixedBitSet {
    let mut b = FixedBitSet::with_capacity(n);
    for i in items {
        b.insert(i);
    }
    b
}

/// Boolean matrix closure: `r_k[i][j]` holds when j is within k control
/// edges of i. Returns the closure row of `root` and the first k at which
/// the row stops growing.
pub fn reachability_oracle(g: &ProgramGraph, root: usize) -> (FixedBitSet, u32) {
    let n = g.num_vertices();
    let mut adj = vec![vec![false; n]; n];
    for (s, d, _) in edges_of(g, Flow::Control) {
        adj[s][d] = true;
    }
    let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    let mut k = 0;
    loop {
        // r_{k+1} = r_k ∨ r_k·adj
        let mut next = r.clone();
        for i in 0..n {
            for m in 0..n {
                if r[i][m] {
                    for j in 0..n {
                        if adj[m][j] {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        if next[root] == r[root] {
            return (bits(n, (0..n).filter(|&j| r[root][j])), k);
        }
        r = next;
        k += 1;
    }
}

fn control_reach(g: &ProgramGraph, from: usize, removed: Option<usize>) -> Vec<bool> {
    let n = g.num_vertices();
    let mut seen = vec![false; n];
    if Some(from) == removed {
        return seen;
    }
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for (s, d, _) in edges_of(g, Flow::Control) {
            if s == v && !seen[d] && Some(d) != removed {
                seen[d] = true;
                stack.push(d);
            }
        }
    }
    seen
}

/// u dominates the root when deleting u cuts every path from the function
/// entry to the root.
pub fn dominator_oracle(g: &ProgramGraph, root: usize) -> FixedBitSet {
    let n = g.num_vertices();
    let f = g.vertices[root].function.as_ref().expect("root belongs to a function");
    let entry = g.function_table[f].entry;
    let base = control_reach(g, entry, None);
    if !base[root] {
        return bits(n, [root]);
    }
    bits(n, (0..n).filter(|&u| base[u] && (u == root || !control_reach(g, entry, Some(u))[root])))
}

fn data_operands(g: &ProgramGraph, v: usize) -> Vec<usize> {
    let mut ops: Vec<(u32, usize)> =
        edges_of(g, Flow::Data).filter(|&(_, d, _)| d == v).map(|(s, _, p)| (p, s)).collect();
    ops.sort();
    ops.into_iter().map(|(_, s)| s).collect()
}

fn results(g: &ProgramGraph, v: usize) -> Vec<usize> {
    edges_of(g, Flow::Data)
        .filter(|&(s, d, _)| s == v && g.vertices[d].kind == VertexKind::Variable)
        .map(|(_, d, _)| d)
        .collect()
}

/// Fixpoint of "add every definer of every variable some member reads".
pub fn datadep_oracle(g: &ProgramGraph, root: usize) -> FixedBitSet {
    let n = g.num_vertices();
    let mut set: BTreeSet<usize> = [root].into();
    loop {
        let mut grew = false;
        for v in set.clone() {
            for x in data_operands(g, v).into_iter().filter(|&x| g.vertices[x].kind == VertexKind::Variable) {
                for d in (0..n).filter(|&d| g.vertices[d].kind == VertexKind::Instruction && results(g, d).contains(&x)) {
                    grew |= set.insert(d);
                }
            }
        }
        if !grew {
            return bits(n, set);
        }
    }
}

/// A variable is live out of the root when some control path leaving the
/// root reaches a reader of it before any redefinition. Paths are explored
/// one variable at a time.
pub fn liveness_oracle(g: &ProgramGraph, root: usize) -> FixedBitSet {
    let n = g.num_vertices();
    let succ = |v: usize| edges_of(g, Flow::Control).filter(move |&(s, _, _)| s == v).map(|(_, d, _)| d);
    let vars: BTreeSet<usize> = (0..n)
        .filter(|&v| g.vertices[v].kind == VertexKind::Instruction)
        .flat_map(|v| data_operands(g, v))
        .filter(|&x| g.vertices[x].kind == VertexKind::Variable)
        .collect();
    let mut live = FixedBitSet::with_capacity(n);
    for x in vars {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = succ(root).collect();
        while let Some(s) = stack.pop() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            if data_operands(g, s).contains(&x) {
                live.insert(x);
                break;
            }
            if results(g, s).contains(&x) {
                continue;
            }
            stack.extend(succ(s));
        }
    }
    live
}

const NOT_EXPRESSIONS: [&str; 13] = [
    "load", "store", "call", "alloca", "phi", "invoke", "va_arg", "atomicrmw", "cmpxchg", "landingpad",
    "catchpad", "cleanuppad", "fence",
];

fn opcode(text: &str) -> Option<(&str, Option<&str>)> {
    let mut w = text.strip_prefix("<%ID> = ")?.split(' ');
    Some((w.next()?, w.next()))
}

fn commutes(text: &str) -> bool {
    match opcode(text) {
        Some(("add" | "mul" | "and" | "or" | "xor" | "fadd" | "fmul", _)) => true,
        Some(("icmp", Some(p))) => matches!(p, "eq" | "ne"),
        Some(("fcmp", Some(p))) => matches!(p, "oeq" | "ueq" | "one" | "une"),
        _ => false,
    }
}

/// Swap the two trailing operand tokens of a binary statement.
fn swap_operands(text: &str) -> Option<String> {
    let (left, b) = text.rsplit_once(", ")?;
    let (head, a) = left.rsplit_once(' ')?;
    if b.contains(' ') {
        return None;
    }
    Some(format!("{head} {b}, {a}"))
}

fn expression(g: &ProgramGraph, v: usize) -> bool {
    let t = &g.vertices[v].text;
    g.vertices[v].kind == VertexKind::Instruction
        && !is_dummy(g, v)
        && !results(g, v).is_empty()
        && !data_operands(g, v).is_empty()
        && opcode(t).is_some_and(|(op, _)| !NOT_EXPRESSIONS.contains(&op))
}

fn same_expression(g: &ProgramGraph, a: usize, b: usize) -> bool {
    if !expression(g, a) || !expression(g, b) {
        return false;
    }
    let (ta, tb) = (&g.vertices[a].text, &g.vertices[b].text);
    let (oa, ob) = (data_operands(g, a), data_operands(g, b));
    if ta == tb && oa == ob {
        return true;
    }
    commutes(ta)
        && oa.len() == 2
        && ob.len() == 2
        && oa[0] == ob[1]
        && oa[1] == ob[0]
        && swap_operands(ta).as_deref() == Some(tb.as_str())
}

/// Compare the root against every instruction pairwise.
pub fn subexpression_oracle(g: &ProgramGraph, root: usize) -> Option<FixedBitSet> {
    if !expression(g, root) {
        return None;
    }
    let n = g.num_vertices();
    Some(bits(n, (0..n).filter(|&v| v == root || same_expression(g, root, v))))
}

/// Instruction roots the oracles can be asked about for `task`.
pub fn oracle_roots(g: &ProgramGraph, task: AnalysisTask) -> Vec<usize> {
    let n = g.num_vertices();
    let base = (0..n).filter(|&v| g.vertices[v].kind == VertexKind::Instruction && !is_dummy(g, v));
    match task {
        AnalysisTask::Subexpressions => base.filter(|&v| subexpression_oracle(g, v).is_some_and(|s| s.count_ones(..) >= 2)).collect(),
        AnalysisTask::DomTree => base
            .filter(|&v| {
                let f = g.vertices[v].function.as_ref().unwrap();
                control_reach(g, g.function_table[f].entry, None)[v]
            })
            .collect(),
        _ => base.collect(),
    }
}

pub fn oracle_labels(g: &ProgramGraph, task: AnalysisTask, root: usize) -> FixedBitSet {
    match task {
        AnalysisTask::Reachability => reachability_oracle(g, root).0,
        AnalysisTask::DomTree => dominator_oracle(g, root),
        AnalysisTask::DataDep => datadep_oracle(g, root),
        AnalysisTask::Liveness => liveness_oracle(g, root),
        AnalysisTask::Subexpressions => subexpression_oracle(g, root).unwrap_or_else(|| bits(g.num_vertices(), [])),
    }
}

/// Loop connectedness: the most back edges (relative to a DFS spanning
/// tree from `entry`) on any acyclic control path, by exhaustive
/// enumeration of the simple paths from every reachable vertex.
pub fn loop_connectedness(g: &ProgramGraph, entry: usize) -> usize {
    let n = g.num_vertices();
    let succ: Vec<Vec<usize>> =
        (0..n).map(|v| edges_of(g, Flow::Control).filter(|&(s, _, _)| s == v).map(|(_, d, _)| d).collect()).collect();
    // back edges: target is an ancestor on the DFS stack
    let mut back = BTreeSet::new();
    let mut state = vec![0u8; n];
    fn dfs(v: usize, succ: &[Vec<usize>], state: &mut [u8], back: &mut BTreeSet<(usize, usize)>) {
        state[v] = 1;
        for &w in &succ[v] {
            if state[w] == 0 {
                dfs(w, succ, state, back);
            } else if state[w] == 1 {
                back.insert((v, w));
            }
        }
        state[v] = 2;
    }
    dfs(entry, &succ, &mut state, &mut back);
    fn longest(
        v: usize,
        succ: &[Vec<usize>],
        back: &BTreeSet<(usize, usize)>,
        on_path: &mut Vec<bool>,
        count: usize,
        best: &mut usize,
    ) {
        *best = (*best).max(count);
        for &w in &succ[v] {
            if !on_path[w] {
                on_path[w] = true;
                longest(w, succ, back, on_path, count + back.contains(&(v, w)) as usize, best);
                on_path[w] = false;
            }
        }
    }
    let mut on_path = vec![false; n];
    let mut best = 0;
    for start in (0..n).filter(|&v| state[v] == 2) {
        on_path[start] = true;
        longest(start, &succ, &back, &mut on_path, 0, &mut best);
        on_path[start] = false;
    }
    best
}

// ---------------------------------------------------------------------------
// network reference

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pos(p: u32, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let i2 = (j / 2 * 2) as f64;
            let a = p as f64 / 10000f64.powf(i2 / dim as f64);
            if j % 2 == 0 {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}

/// `x·M` for a row vector and a row-major `rows × cols` block at `off`.
fn vecmat(x: &[f64], data: &[f64], off: usize, cols: usize, col0: usize, ncols: usize) -> Vec<f64> {
    (0..ncols).map(|j| x.iter().enumerate().map(|(i, xi)| xi * data[off + i * cols + col0 + j]).sum()).collect()
}

/// Per-vertex loops with no batching: returns `(h⁰, hᵀ)` per vertex.
pub fn dense_propagate(
    g: &EncodedGraph,
    root: Option<usize>,
    p: &ModelParameters,
    c: &ModelConfig,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l = p.layout();
    let (d, h, n) = (l.embed_dim, l.hidden, g.num_vertices());
    let data = &p.data;
    let h0: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let mut x: Vec<f64> = p.embedding_row(g.tokens[v] as usize).to_vec();
            x.extend(if Some(v) == root { [0.0, c.selector_scale] } else { [c.selector_scale, 0.0] });
            x
        })
        .collect();
    let mut cur = h0.clone();
    for _ in 0..c.timesteps {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut m = vec![0.0; h];
            for e in &g.edges {
                let (w, dir) = if e.dst as usize == v {
                    (e.src as usize, 0)
                } else if e.src as usize == v {
                    (e.dst as usize, 1)
                } else {
                    continue;
                };
                let pe = pos(e.position, h);
                let x: Vec<f64> = cur[w].iter().zip(&pe).map(|(a, b)| a * b).collect();
                let block = l.message.start + (2 * e.flow as usize + dir) * h * h;
                for (mj, yj) in m.iter_mut().zip(vecmat(&x, data, block, h, 0, h)) {
                    *mj += yj;
                }
                // self-loops deliver both directions
                if e.src == e.dst && dir == 0 {
                    let block = l.message.start + (2 * e.flow as usize + 1) * h * h;
                    for (mj, yj) in m.iter_mut().zip(vecmat(&x, data, block, h, 0, h)) {
                        *mj += yj;
                    }
                }
            }
            let hv = &cur[v];
            let gate = |k: usize, input: &[f64], state: &[f64]| -> Vec<f64> {
                let a = vecmat(input, data, l.gru_w.start, 3 * h, k * h, h);
                let b = vecmat(state, data, l.gru_u.start, 3 * h, k * h, h);
                (0..h).map(|j| a[j] + b[j] + data[l.gru_b.start + k * h + j]).collect()
            };
            let z: Vec<f64> = gate(0, &m, hv).into_iter().map(sig).collect();
            let r: Vec<f64> = gate(1, &m, hv).into_iter().map(sig).collect();
            let rh: Vec<f64> = r.iter().zip(hv).map(|(a, b)| a * b).collect();
            let cand: Vec<f64> = gate(2, &m, &rh).into_iter().map(f64::tanh).collect();
            next.push((0..h).map(|j| (1.0 - z[j]) * hv[j] + z[j] * cand[j]).collect());
        }
        cur = next;
    }
    let _ = d;
    (h0, cur)
}

/// Scalar readout of one vertex.
pub fn dense_readout(ht: &[f64], h0: &[f64], p: &ModelParameters) -> [f64; 2] {
    let l = p.layout();
    let h = l.hidden;
    let data = &p.data;
    let dense = |x: &[f64], w: usize, b: usize, out: usize| -> Vec<f64> {
        (0..out).map(|j| data[b + j] + (0..x.len()).map(|i| x[i] * data[w + i * out + j]).sum::<f64>()).collect()
    };
    let x: Vec<f64> = ht.iter().chain(h0).copied().collect();
    let u1: Vec<f64> = dense(&x, l.i1_w.start, l.i1_b.start, h).into_iter().map(f64::tanh).collect();
    let i = dense(&u1, l.i2_w.start, l.i2_b.start, 2);
    let u2: Vec<f64> = dense(ht, l.j1_w.start, l.j1_b.start, h).into_iter().map(f64::tanh).collect();
    let j = dense(&u2, l.j2_w.start, l.j2_b.start, 2);
    [sig(i[0]) * j[0], sig(i[1]) * j[1]]
}

/// Random encoded graph: `n` vertices, about `edges` typed edges with small
/// positions.
pub fn random_encoded<R: Rng>(rng: &mut R, n: usize, edges: usize, vocab: usize) -> EncodedGraph {
    let tokens = (0..n).map(|_| rng.gen_range(0..vocab as u32)).collect();
    let edges = (0..edges)
        .map(|_| EdgeInput {
            src: rng.gen_range(0..n as u32),
            dst: rng.gen_range(0..n as u32),
            flow: rng.gen_range(0..3),
            position: rng.gen_range(0..4),
        })
        .collect();
    EncodedGraph { tokens, edges }
}

/// Random instance on a random graph: root, labels and every vertex scored.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, vocab: usize) -> Batch {
    let g = random_encoded(rng, n, 2 * n, vocab);
    let labels = bits(n, (0..n).filter(|_| rng.gen_bool(0.4)));
    let scored = bits(n, 0..n);
    let mut b = Batch::new();
    b.push(&g, Some(rng.gen_range(0..n)), Some(&labels), Some(&scored));
    b
}

/// Largest relative error between analytic and central-difference
/// gradients per parameter group. Relative error uses a denominator floor
/// of 1e-4 so coordinates with vanishing gradient are judged on absolute
/// error.
pub fn gradient_check(batch: &Batch, p: &ModelParameters, c: &ModelConfig, step: f64) -> Vec<(String, f64)> {
    use programl_core::model::{loss, loss_and_grads};
    let (_, g) = loss_and_grads(batch, p, c).unwrap();
    let mut q = p.clone();
    p.layout()
        .groups()
        .into_iter()
        .map(|(name, r)| {
            let mut worst: f64 = 0.0;
            for k in r {
                let x = q.data[k];
                q.data[k] = x + step;
                let up = loss(batch, &q, c).unwrap();
                q.data[k] = x - step;
                let down = loss(batch, &q, c).unwrap();
                q.data[k] = x;
                let num = (up - down) / (2.0 * step);
                worst = worst.max((num - g[k]).abs() / num.abs().max(g[k].abs()).max(1e-4));
            }
            (name, worst)
        })
        .collect()
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(1.0, f64::max);
    num / den
}
