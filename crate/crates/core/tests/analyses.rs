mod common;

use common::*;
use programl_core::analysis::{AnalysisError, AnalysisTask, Analyzer};
use programl_core::dataset::{filter_by_steps, make_instances};
use programl_core::synth::{ladder_program, loop_nest_program};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GRAPHS: usize = 1000;

fn agree_on_random_graphs(task: AnalysisTask, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots_checked = 0;
    for i in 0..GRAPHS {
        let g = random_small_graph(&mut rng, 30);
        let a = Analyzer::new(&g);
        let roots = a.eligible_roots(task);
        assert_eq!(roots, oracle_roots(&g, task), "graph {i}: eligible roots");
        for r in roots {
            let got = a.run(task, r).unwrap();
            assert_eq!(got.labels, oracle_labels(&g, task, r), "graph {i} root {r}");
            if task == AnalysisTask::Reachability {
                assert_eq!(got.steps, reachability_oracle(&g, r).1, "graph {i} root {r}: steps");
            }
            roots_checked += 1;
        }
    }
    assert!(roots_checked >= GRAPHS, "{task}: only {roots_checked} roots");
}

#[test]
fn reachability_matches_matrix_closure() {
    agree_on_random_graphs(AnalysisTask::Reachability, 1);
}

#[test]
fn dominators_match_vertex_deletion() {
    agree_on_random_graphs(AnalysisTask::DomTree, 2);
}

#[test]
fn datadep_matches_def_use_closure() {
    agree_on_random_graphs(AnalysisTask::DataDep, 3);
}

#[test]
fn liveness_matches_path_search() {
    agree_on_random_graphs(AnalysisTask::Liveness, 4);
}

#[test]
fn subexpressions_match_pairwise_comparison() {
    agree_on_random_graphs(AnalysisTask::Subexpressions, 5);
}

#[test]
fn non_instruction_roots_are_rejected() {
    let g = graph_of("define i32 @f(i32 %x) {\n  %a = add i32 %x, 1\n  ret i32 %a\n}");
    let var = g.vertices.iter().position(|v| v.kind != programl_core::graph::VertexKind::Instruction).unwrap();
    for task in AnalysisTask::ALL {
        assert_eq!(Analyzer::new(&g).run(task, var), Err(AnalysisError::RootKind { root: var }));
    }
}

#[test]
fn liveness_sweeps_stay_within_loop_connectedness_bound() {
    for k in 0..36 {
        for (src, f) in [(ladder_program(k), "@ladder"), (loop_nest_program(k.min(6)), "@nest")] {
            let g = graph_of(&src);
            let d = loop_connectedness(&g, g.function_table[f].entry) as u32;
            let a = Analyzer::new(&g);
            for r in a.eligible_roots(AnalysisTask::Liveness) {
                let steps = a.liveness(r).unwrap().steps;
                assert!(steps <= d + 3, "{f} k={k}: steps {steps} > d {d} + 3");
            }
        }
    }
}

#[test]
fn ladder_connectedness_is_rung_count() {
    for k in 1..20 {
        let g = graph_of(&ladder_program(k));
        assert_eq!(loop_connectedness(&g, g.function_table["@ladder"].entry), k);
    }
}

#[test]
fn step_filter_removes_exactly_long_instances() {
    let mut all = Vec::new();
    for k in 0..48 {
        let g = graph_of(&ladder_program(k));
        all.extend(make_instances(&g, AnalysisTask::Liveness, 0));
    }
    let (kept, excluded) = filter_by_steps(all.clone(), 30);
    assert!(!excluded.is_empty() && !kept.is_empty());
    assert!(kept.iter().all(|i| i.steps <= 30));
    assert!(excluded.iter().all(|i| i.steps > 30));
    assert_eq!(kept.len() + excluded.len(), all.len());
}
