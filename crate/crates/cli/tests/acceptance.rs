//! Acceptance run: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use common::*;
use programl_cli::generate::{generate_corpus, ProgramKind};
use programl_cli::pipeline::{build_files, make_dataset, run_eval, run_train, write_dataset, BuildResult, Dataset, CHECKPOINT_FILE};
use programl_cli::records::Checkpoint;
use programl_core::analysis::{AnalysisTask, Analyzer};
use programl_core::dataset::{filter_by_steps, make_instances, root_count, split_corpus, Split};
use programl_core::graph::{verify, ProgramGraph};
use programl_core::model::{propagate, Batch, EdgeInput, EncodedGraph, ModelConfig, ModelParameters};
use programl_core::synth::{ladder_program, loop_nest_program};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORPUS: usize = 5000;
const TRAIN_BUDGET: usize = 10_000;
const THRESHOLDS: [(AnalysisTask, f64); 5] = [
    (AnalysisTask::Reachability, 0.95),
    (AnalysisTask::DataDep, 0.90),
    (AnalysisTask::Liveness, 0.90),
    (AnalysisTask::Subexpressions, 0.80),
    (AnalysisTask::DomTree, 0.60),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = BTreeMap::new();
    let mut mismatches = Vec::new();
    for task in AnalysisTask::ALL {
        let (mut graphs, mut roots) = (0, 0);
        while graphs < 1000 {
            let g = random_small_graph(&mut rng, 30);
            let a = Analyzer::new(&g);
            let eligible = a.eligible_roots(task);
            if eligible != oracle_roots(&g, task) {
                mismatches.push(format!("{task}: eligible roots differ"));
            }
            for r in eligible {
                let got = a.run(task, r).unwrap();
                let ok = got.labels == oracle_labels(&g, task, r)
                    && (task != AnalysisTask::Reachability || got.steps == reachability_oracle(&g, r).1);
                if !ok {
                    mismatches.push(format!("{task} root {r}"));
                }
                roots += 1;
            }
            graphs += 1;
        }
        counts.insert(task, (graphs, roots));
    }
    let secs = t.elapsed().as_secs_f64();
    let summary: Vec<String> = counts.iter().map(|(t, (g, r))| format!("{t} {g} graphs/{r} roots")).collect();
    outcome(
        mismatches.is_empty() && secs < 300.0,
        format!("{}; {} mismatches; {secs:.1} s", summary.join(", "), mismatches.len()),
    )
}

fn graph_invariants(corpus: &[ProgramGraph]) -> Outcome {
    let mut extra: Vec<ProgramGraph> = (0..48).map(|k| graph_of(&ladder_program(k))).collect();
    extra.extend((0..12).map(|k| graph_of(&loop_nest_program(k))));
    let mut by_rule: BTreeMap<&str, usize> = BTreeMap::new();
    for g in corpus.iter().chain(&extra) {
        for v in verify(g) {
            *by_rule.entry(v.rule).or_default() += 1;
        }
    }
    let total: usize = by_rule.values().sum();
    outcome(total == 0, format!("{} graphs checked, {total} violations {by_rule:?}", corpus.len() + extra.len()))
}

fn gradient_check_criterion() -> Outcome {
    let c = ModelConfig { embed_dim: 8, timesteps: 5, selector_scale: 1.0, ..ModelConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..10 {
        let p = ModelParameters::init(12, &ModelConfig { seed: 100 + i, ..c.clone() });
        let b = random_instance(&mut rng, 6, 12);
        for (g, e) in gradient_check(&b, &p, &c, 1e-4) {
            let w = worst.entry(g).or_insert(0.0);
            *w = w.max(e);
        }
    }
    let (name, max) = worst.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(n, e)| (n.clone(), *e)).unwrap();
    outcome(
        max <= 1e-4 && worst.len() == 18,
        format!("{} groups, 10 instances, step 1e-4, worst {max:.2e} ({name})", worst.len()),
    )
}

struct TaskResult {
    task: AnalysisTask,
    f1: f64,
    precision: f64,
    recall: f64,
    instances: usize,
    secs: f64,
}

fn desk_learning(data_dir: &Path, work: &Path) -> (Outcome, Vec<TaskResult>) {
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (task, _) in THRESHOLDS {
        let t = Instant::now();
        let config = ModelConfig {
            embed_dim: 32,
            timesteps: 30,
            batch_vertices: 512,
            checkpoint_every: TRAIN_BUDGET / 2,
            max_train_graphs: TRAIN_BUDGET,
            ..ModelConfig::default()
        };
        let out = work.join(format!("train-{task}"));
        let trained = run_train(data_dir, task, &config, &out, None, |r| {
            eprintln!(
                "  {task}: checkpoint {} after {} instances, loss {:.4}, val F1 {:.4}",
                r.checkpoint, r.graphs_seen, r.loss, r.val.f1
            )
        });
        if let Err(e) = trained {
            errors.push(format!("{task}: {e}"));
            continue;
        }
        let ckpt = Checkpoint::load(&out.join(CHECKPOINT_FILE)).unwrap();
        match run_eval(&ckpt, data_dir, Split::Test) {
            Ok(m) => results.push(TaskResult {
                task,
                f1: m.f1,
                precision: m.precision,
                recall: m.recall,
                instances: m.total() as usize,
                secs: t.elapsed().as_secs_f64(),
            }),
            Err(e) => errors.push(format!("{task}: {e}")),
        }
    }
    let threshold: BTreeMap<AnalysisTask, f64> = THRESHOLDS.into_iter().collect();
    let pass = errors.is_empty() && results.len() == 5 && results.iter().all(|r| r.f1 >= threshold[&r.task]);
    let mut detail: Vec<String> =
        results.iter().map(|r| format!("{} F1 {:.4} (min {})", r.task, r.f1, threshold[&r.task])).collect();
    detail.extend(errors);
    (outcome(pass, detail.join(", ")), results)
}

fn dataset_equations(data_dir: &Path) -> Outcome {
    let mut problems = Vec::new();
    for n in 1..=10_000usize {
        if root_count(n) != ((n as f64 / 10.0).ceil() as usize).min(10) {
            problems.push(format!("root_count({n})"));
        }
    }
    for n in 5..=2000usize {
        let files = (0..n).map(|i| (format!("f{i}"), 1, 1)).collect();
        let (tr, va, te) = split_corpus(files, n as u64).unwrap().sizes();
        let off = |got: usize, share: f64| (got as f64 - n as f64 * share / 5.0).abs();
        if off(tr, 3.0) > 1.0 || off(va, 1.0) > 1.0 || off(te, 1.0) > 1.0 {
            problems.push(format!("split({n}) = {tr}/{va}/{te}"));
        }
    }
    let ds = Dataset::load(data_dir).unwrap();
    let split_of: BTreeMap<&str, Split> = ds.manifest.files.iter().map(|f| (f.path.as_str(), f.split)).collect();
    if split_of.len() != ds.manifest.files.len() {
        problems.push("a file is listed twice in the manifest".into());
    }
    let mut checked = 0;
    for task in AnalysisTask::ALL {
        let mut seen: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
        for r in ds.instances(data_dir, task).unwrap() {
            if split_of.get(r.path.as_str()) != Some(&r.split) {
                problems.push(format!("{task} instance of {} in {}", r.path, r.split));
            }
            seen.entry(r.path).or_default().insert(r.split);
            checked += 1;
        }
        if seen.values().any(|s| s.len() > 1) {
            problems.push(format!("{task}: a file spans splits"));
        }
    }
    let (tr, va, te) = ds.manifest.manifest().sizes();
    outcome(
        problems.is_empty(),
        format!(
            "root_count 1..10000, splits 5..2000, desk split {tr}/{va}/{te}, {checked} instances checked; {} problems {:?}",
            problems.len(),
            problems.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn step_filter() -> Outcome {
    let mut worst_slack = i64::MAX;
    let mut bound_ok = true;
    let mut all = Vec::new();
    let programs = (0..48).map(|k| (ladder_program(k), "@ladder")).chain((0..12).map(|k| (loop_nest_program(k), "@nest")));
    let mut max_d = 0;
    for (src, f) in programs {
        let g = graph_of(&src);
        let d = loop_connectedness(&g, g.function_table[f].entry) as u32;
        max_d = max_d.max(d);
        let a = Analyzer::new(&g);
        for r in a.eligible_roots(AnalysisTask::Liveness) {
            let steps = a.liveness(r).unwrap().steps;
            bound_ok &= steps <= d + 3;
            worst_slack = worst_slack.min(d as i64 + 3 - steps as i64);
        }
        all.extend(make_instances(&g, AnalysisTask::Liveness, 0));
    }
    let n = all.len();
    let long: BTreeSet<(String, usize)> = all.iter().filter(|i| i.steps > 30).map(|i| (i.path.clone() + &i.graph_hash.to_string(), i.root)).collect();
    let (kept, excluded) = filter_by_steps(all, 30);
    let excluded_keys: BTreeSet<(String, usize)> =
        excluded.iter().map(|i| (i.path.clone() + &i.graph_hash.to_string(), i.root)).collect();
    let exact = excluded_keys == long && kept.iter().all(|i| i.steps <= 30) && kept.len() + excluded.len() == n;
    outcome(
        bound_ok && exact && !excluded.is_empty(),
        format!(
            "d(G) up to {max_d}, min slack d+3-steps = {worst_slack}; filter kept {} and removed {} of {n}",
            kept.len(),
            excluded.len()
        ),
    )
}

fn model_reference() -> Outcome {
    let c = ModelConfig::default();
    let vocab = 40;
    let p = ModelParameters::init(vocab, &c);
    let h = p.hidden();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_dense: f64 = 0.0;
    let mut worst_perm: f64 = 0.0;
    for _ in 0..10 {
        let graphs: Vec<(EncodedGraph, usize)> = (0..10)
            .map(|_| {
                let n = rng.gen_range(2..=30);
                let e = rng.gen_range(n..=3 * n);
                (random_encoded(&mut rng, n, e, vocab), rng.gen_range(0..n))
            })
            .collect();
        let mut b = Batch::new();
        for (g, r) in &graphs {
            b.push(g, Some(*r), None, None);
        }
        let ht = propagate(&b, &p, &c).unwrap();
        for ((g, r), off) in graphs.iter().zip(&b.offsets) {
            let n = g.num_vertices();
            let got = &ht[off * h..(off + n) * h];
            worst_dense = worst_dense.max(rel_diff(got, &dense_propagate(g, Some(*r), &p, &c).1.concat()));

            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            let mut tokens = vec![0; n];
            for v in 0..n {
                tokens[perm[v]] = g.tokens[v];
            }
            let edges = g
                .edges
                .iter()
                .rev()
                .map(|e| EdgeInput { src: perm[e.src as usize] as u32, dst: perm[e.dst as usize] as u32, ..*e })
                .collect();
            let pg = EncodedGraph { tokens, edges };
            let pt = propagate(&Batch::single(&pg, Some(perm[*r])), &p, &c).unwrap();
            for v in 0..n {
                worst_perm = worst_perm.max(rel_diff(&pt[perm[v] * h..][..h], &got[v * h..][..h]));
            }
        }
    }
    outcome(
        worst_dense <= 1e-10 && worst_perm <= 1e-10,
        format!("100 graphs at d=32 T=30: dense {worst_dense:.2e}, permutation {worst_perm:.2e}"),
    )
}

fn throughput(build: &BuildResult) -> Outcome {
    let median = build.median_ms().unwrap_or(f64::INFINITY);
    let max = build.timings_ms.iter().map(|t| t.1).fold(0.0, f64::max);
    outcome(median <= 100.0, format!("{} graphs, median {median:.3} ms, max {max:.3} ms", build.timings_ms.len()))
}

fn main() {
    let started = Instant::now();
    let work = tempfile::TempDir::new().expect("temporary directory");
    let src = work.path().join("corpus");
    let data_dir = work.path().join("dataset");
    let files = generate_corpus(&src, CORPUS, 0, ProgramKind::Structured).expect("corpus generation");
    let build = build_files(&files);
    let data = make_dataset(&build.graphs, &AnalysisTask::ALL, 0, 30, 1).expect("dataset");
    write_dataset(&data_dir, &build.graphs, &data).expect("dataset files");
    eprintln!(
        "desk corpus: {} programs, {} graphs, {} build failures",
        files.len(),
        build.graphs.len(),
        build.failures.len()
    );

    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    lines.push((1, "oracle equivalence", oracle_equivalence()));
    lines.push((2, "graph invariants", graph_invariants(&build.graphs)));
    lines.push((3, "gradient check", gradient_check_criterion()));
    let (learning, tasks) = desk_learning(&data_dir, work.path());
    lines.push((4, "desk-scale learning", learning));
    lines.push((5, "dataset equations", dataset_equations(&data_dir)));
    lines.push((6, "step filter", step_filter()));
    lines.push((7, "model reference", model_reference()));
    lines.push((8, "construction throughput", throughput(&build)));

    println!();
    println!("{:<15} {:>9} {:>9} {:>9} {:>10} {:>8}", "task", "precision", "recall", "f1", "scored", "seconds");
    for r in &tasks {
        println!(
            "{:<15} {:>9.4} {:>9.4} {:>9.4} {:>10} {:>8.1}",
            r.task.as_str(),
            r.precision,
            r.recall,
            r.f1,
            r.instances,
            r.secs
        );
    }
    println!();
    for (n, name, o) in &lines {
        println!("criterion {n} {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = lines.iter().filter(|l| !l.2.pass).count();
    println!("{} of {} criteria passed in {:.0} s", lines.len() - failed, lines.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
