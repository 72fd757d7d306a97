mod common;

use common::graph_of;
use programl_core::analysis::AnalysisTask;
use programl_core::dataset::make_instances;
use programl_core::graph::{build_graph, verify, Edge, Flow, ProgramGraph, Vertex, VertexKind};
use programl_core::ir::{parse_ir, parse_unvalidated};
use programl_core::synth::{ladder_program, loop_nest_program, random_cfg_program, structured_program, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match seed % 4 {
        0 => random_cfg_program(&mut rng, 1 + (seed as usize / 4) % 9, 4),
        1 => ladder_program((seed as usize / 4) % 12),
        _ => structured_program(&mut rng, &SynthConfig::default()),
    }
}

/// Prefix every local name with `q.`. Labels and values alike stay
/// consistent, so the program means the same thing.
fn rename_locals(src: &str) -> String {
    let mut out = String::with_capacity(src.len() + 64);
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '%' && chars.peek().is_some_and(|n| n.is_ascii_alphanumeric() || *n == '_') {
            out.push_str("q.");
        }
    }
    // block labels are written without the sigil
    out.lines()
        .map(|l| match l.strip_suffix(':') {
            Some(label) if !l.starts_with(' ') && !label.contains(' ') => format!("q.{l}"),
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_ir_reparses_to_the_same_module(seed in any::<u64>()) {
        let m = parse_ir(&program(seed)).unwrap();
        let again = parse_ir(&m.to_string()).unwrap();
        prop_assert_eq!(&m.functions, &again.functions);
        prop_assert_eq!(&m.globals, &again.globals);
    }

    #[test]
    fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_unvalidated(&text);
        let _ = parse_ir(&text);
    }

    #[test]
    fn parser_never_panics_on_damaged_programs(seed in any::<u64>(), cut in 0usize..2000, junk in "[ -~]{0,8}") {
        let src = program(seed);
        let at = src.char_indices().map(|(i, _)| i).nth(cut % src.len().max(1)).unwrap_or(0);
        let damaged = format!("{}{}{}", &src[..at], junk, &src[at..]);
        if let Ok(m) = parse_ir(&damaged) {
            let _ = build_graph(&m);
        }
    }

    #[test]
    fn renaming_locals_leaves_the_graph_unchanged(seed in any::<u64>()) {
        let src = program(seed);
        let a = graph_of(&src);
        let b = graph_of(&rename_locals(&src));
        prop_assert_eq!(a.content_hash(), b.content_hash());
        prop_assert_eq!(a.vertices, b.vertices);
        prop_assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn construction_and_sampling_are_deterministic(seed in any::<u64>()) {
        let src = program(seed);
        let (a, b) = (graph_of(&src), graph_of(&src));
        prop_assert_eq!(&a, &b);
        for task in AnalysisTask::ALL {
            prop_assert_eq!(make_instances(&a, task, seed), make_instances(&b, task, seed));
        }
    }

    #[test]
    fn generated_graphs_satisfy_invariants(seed in any::<u64>()) {
        let g = graph_of(&program(seed));
        let v = verify(&g);
        prop_assert!(v.is_empty(), "{:?}", v);
    }
}

#[test]
fn loop_nests_satisfy_invariants() {
    for depth in 0..12 {
        assert!(verify(&graph_of(&loop_nest_program(depth))).is_empty());
    }
}

#[test]
fn renaming_helper_renames() {
    let src = "define i32 @f(i32 %x) {\nentry:\n  br label %next\nnext:\n  ret i32 %x\n}";
    let r = rename_locals(src);
    assert!(r.contains("%q.x") && r.contains("q.next:") && r.contains("label %q.next"));
    assert!(parse_ir(&r).is_ok());
}

fn base() -> ProgramGraph {
    graph_of(
        "define i32 @f(i32 %x, i1 %c) {\nentry:\n  %a = add i32 %x, 1\n  br i1 %c, label %l, label %r\nl:\n  ret i32 %a\nr:\n  %b = mul i32 %a, 1\n  ret i32 %b\n}\ndefine i32 @g() {\n  %v = call i32 @f(i32 2, i1 true)\n  ret i32 %v\n}",
    )
}

fn rules(g: &ProgramGraph) -> Vec<&'static str> {
    verify(g).into_iter().map(|v| v.rule).collect()
}

fn rebuilt(g: &ProgramGraph, vertices: Vec<Vertex>, edges: Vec<Edge>) -> ProgramGraph {
    ProgramGraph::from_parts(g.source_path.clone(), vertices, edges).unwrap()
}

#[test]
fn validator_flags_mutations() {
    let g = base();
    assert!(verify(&g).is_empty());
    let first = |flow: Flow, pred: &dyn Fn(&Edge) -> bool| g.edges.iter().position(|e| e.flow == flow && pred(e)).unwrap();

    // a branch loses its first successor
    let mut edges = g.edges.clone();
    let branch = g.edges[first(Flow::Control, &|e| e.position == 1)].src;
    edges.remove(first(Flow::Control, &|e| e.src == branch && e.position == 0));
    assert!(rules(&rebuilt(&g, g.vertices.clone(), edges)).contains(&"control-positions"));

    // operand positions with a hole
    let mut edges = g.edges.clone();
    let i = first(Flow::Data, &|e| g.vertices[e.dst].kind == VertexKind::Instruction && e.position == 0);
    edges[i].position = 5;
    assert!(rules(&rebuilt(&g, g.vertices.clone(), edges)).contains(&"operand-positions"));

    // control edge between functions
    let mut edges = g.edges.clone();
    let fi = |name: &str| g.vertices.iter().position(|v| v.kind == VertexKind::Instruction && v.function.as_deref() == Some(name)).unwrap();
    edges.push(Edge { src: fi("@g"), dst: fi("@f"), flow: Flow::Control, position: 9 });
    let r = rules(&rebuilt(&g, g.vertices.clone(), edges));
    assert!(r.contains(&"control-crosses-function"), "{r:?}");

    // a second vertex for an existing constant
    let mut vertices = g.vertices.clone();
    let c = vertices.iter().position(|v| v.kind == VertexKind::Constant).unwrap();
    let mut dup = vertices[c].clone();
    dup.id = vertices.len();
    vertices.push(dup);
    let mut edges = g.edges.clone();
    let user = edges.iter().find(|e| e.src == c).unwrap().dst;
    edges.push(Edge { src: vertices.len() - 1, dst: user, flow: Flow::Data, position: 7 });
    assert!(rules(&rebuilt(&g, vertices, edges)).contains(&"duplicate-constant"));

    // a variable written by two instructions
    let mut edges = g.edges.clone();
    let def = *edges.iter().find(|e| e.flow == Flow::Data && g.vertices[e.dst].kind == VertexKind::Variable && g.vertices[e.src].kind == VertexKind::Instruction).unwrap();
    let other = g.vertices.iter().position(|v| v.kind == VertexKind::Instruction && v.id != def.src && v.function == g.vertices[def.src].function).unwrap();
    edges.push(Edge { src: other, ..def });
    assert!(rules(&rebuilt(&g, g.vertices.clone(), edges)).contains(&"variable-definers"));

    // a value nobody touches
    let mut vertices = g.vertices.clone();
    vertices.push(Vertex { id: vertices.len(), kind: VertexKind::Variable, text: "i32".into(), function: Some("@f".into()) });
    assert!(rules(&rebuilt(&g, vertices, g.edges.clone())).contains(&"isolated-value"));
}
